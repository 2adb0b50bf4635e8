//! Acceptance criteria, run in order. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails.

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use biomatch::evaluation::{self, Comparator, FeatureSet, TrialSet, BENCH_ALPHAS};
use biomatch::wire;
use biomatch_core::elgamal::{
    add, decrypt, encrypt, final_decrypt, is_zero, keygen, message_point, partial_decrypt, scalar_mul, Ciphertext,
};
use biomatch_core::protocol::{
    count_zeros, enroll, MemoryStore, Message, SensorStep, SensorVerification, ServiceSession, SystemConfig,
    SystemParams, UserId,
};
use biomatch_core::quantization::{
    build_table, convolve, make_bins, quantize_feature, raw_table, table_score_distribution, LookupTable,
};
use biomatch_core::{GroupId, PrimeGroup, Ristretto255, Secp112r1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Sessions through the wire encoding (criteria 1 and 7)

const SESSIONS: usize = 10_000;
const RHO_GRID: [f64; 5] = [0.5, 0.7, 0.8, 0.9, 0.95];
const DELTA_GRID: [f64; 2] = [0.5, 1.0];

#[derive(Default)]
struct SessionTally {
    sessions: usize,
    mismatches: usize,
    accepts: usize,
    rejects: usize,
    bad_zero_counts: usize,
    leaks: Vec<String>,
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Encodes and decodes a message the way it would cross the network.
fn hop<G: PrimeGroup>(msg: &Message<G>, frames: &mut Vec<Vec<u8>>) -> Message<G> {
    let bytes = wire::encode(msg);
    let back = wire::decode::<G>(&bytes).expect("frame decodes");
    assert_eq!(wire::encode(&back), bytes, "encoding is canonical");
    frames.push(bytes);
    back
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// A frame may carry only the claimed user id, the public dimensions k and b,
/// the compare-set size and group elements. Every decoded field is checked
/// against those, and raw feature encodings are searched for byte-wise.
fn audit_frame<G: PrimeGroup>(frame: &[u8], params: &SystemParams, user: &UserId, features: &[f64]) -> Option<String> {
    for &x in features {
        for needle in [x.to_be_bytes(), x.to_le_bytes()] {
            if contains(frame, &needle) {
                return Some(format!("f64 bytes of feature {x} in a frame"));
            }
        }
        if contains(frame, x.to_string().as_bytes()) {
            return Some(format!("decimal text of feature {x} in a frame"));
        }
    }
    let msg = wire::decode::<G>(frame).ok()?;
    match msg {
        Message::VerifyClaim(u) if &u == user => None,
        Message::Template(t) | Message::EnrollRequest(t)
            if t.user() == user && t.feature_count() == params.feature_count() && t.bits() == params.config().bits =>
        {
            None
        }
        Message::Score(_) => None,
        Message::ResultSet(set) if set.elements.len() as u64 == params.alpha() + 1 => None,
        Message::EnrollAck => None,
        other => Some(format!("unexpected {} frame", other.kind())),
    }
}

struct SessionCase {
    params: SystemParams,
    enrolled: Vec<f64>,
    probe: Vec<f64>,
}

fn run_session<G: PrimeGroup>(case: &SessionCase, index: usize, rng: &mut ChaCha20Rng, tally: &mut SessionTally) {
    let params = &case.params;
    let km = keygen::<G, _>(rng);
    let store = MemoryStore::<G>::new();
    let user = UserId::new(format!("user-{index}")).unwrap();
    let mut frames = Vec::new();

    let template = enroll(&case.enrolled, user.clone(), params, &km.public, rng).unwrap();
    let cells: Vec<Ciphertext<G>> = template.cells().to_vec();
    let mut service = ServiceSession::new(params, &km.public, &km.service);
    let request = hop(&Message::EnrollRequest(template), &mut frames);
    let ack = service.handle(request, &store, rng).unwrap();
    assert!(matches!(hop(&ack.message, &mut frames), Message::EnrollAck));

    let mut service = ServiceSession::new(params, &km.public, &km.service);
    let mut sensor = SensorVerification::new(params, &km.public, &km.sensor, user.clone(), case.probe.clone()).unwrap();
    let mut outgoing = sensor.start().unwrap();
    let (verdict, zeros) = loop {
        let incoming = hop(&outgoing, &mut frames);
        if let Message::Score(score) = &incoming {
            // The score must be fresh, or the service could tell which cells were picked.
            if cells.iter().any(|c| wire::encode(&Message::Score(*c)) == wire::encode(&Message::Score(*score))) {
                tally.leaks.push(format!("session {index}: score equals a template cell"));
            }
        }
        let reply = service.handle(incoming, &store, rng).unwrap();
        let reply = hop(&reply.message, &mut frames);
        let zeros = match &reply {
            Message::ResultSet(set) => Some(count_zeros(set, &km.sensor)),
            _ => None,
        };
        match sensor.on_message(reply, rng).unwrap() {
            SensorStep::Send(next) => outgoing = next,
            SensorStep::Verdict(v) => break (v, zeros.expect("verdict follows a result set")),
            other => panic!("session {index}: unexpected step {other:?}"),
        }
    };

    let oracle = params.plaintext_score_features(&case.enrolled, &case.probe).unwrap() >= params.threshold();
    tally.sessions += 1;
    if verdict != oracle {
        tally.mismatches += 1;
    }
    if verdict {
        tally.accepts += 1;
    } else {
        tally.rejects += 1;
    }
    if zeros != usize::from(oracle) {
        tally.bad_zero_counts += 1;
    }
    let all: Vec<f64> = case.enrolled.iter().chain(&case.probe).copied().collect();
    for frame in &frames {
        if let Some(why) = audit_frame::<G>(frame, params, &user, &all) {
            tally.leaks.push(format!("session {index}: {why}"));
        }
    }
}

fn random_case(tables: &mut HashMap<(u8, usize, usize), LookupTable>, rng: &mut ChaCha20Rng) -> SessionCase {
    let k = rng.random_range(1..=5usize);
    let bits = rng.random_range(1..=3u8);
    let di = rng.random_range(0..DELTA_GRID.len());
    let ris: Vec<usize> = (0..k).map(|_| rng.random_range(0..RHO_GRID.len())).collect();
    let feature_tables: Vec<LookupTable> = ris
        .iter()
        .map(|&ri| {
            tables
                .entry((bits, ri, di))
                .or_insert_with(|| build_table(bits, RHO_GRID[ri], DELTA_GRID[di]).unwrap())
                .clone()
        })
        .collect();
    let rhos: Vec<f64> = ris.iter().map(|&ri| RHO_GRID[ri]).collect();

    let means: Vec<f64> = rhos.iter().map(|&r| r.sqrt() * gaussian(rng)).collect();
    let capture = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        means.iter().zip(&rhos).map(|(&m, &r)| m + (1.0 - r).sqrt() * gaussian(rng)).collect()
    };
    let enrolled = capture(rng);
    let probe = if rng.random_bool(0.5) { capture(rng) } else { (0..k).map(|_| gaussian(rng)).collect() };

    let lo: i64 = feature_tables.iter().map(|t| t.min_score() as i64).sum();
    let hi: i64 = feature_tables.iter().map(|t| t.max_score() as i64).sum();
    let mut config = SystemConfig { group: GroupId::Ristretto255, bits, delta: DELTA_GRID[di], rhos, threshold: hi };
    let threshold = if rng.random_bool(0.5) {
        rng.random_range(lo..=hi)
    } else {
        // Straddle the actual score so both sides of the comparison get exercised.
        let probe_params = SystemParams::with_tables(config.clone(), feature_tables.clone()).unwrap();
        let s = probe_params.plaintext_score_features(&enrolled, &probe).unwrap();
        (s + rng.random_range(-1..=1)).clamp(lo, hi)
    };
    config.threshold = threshold;
    SessionCase { params: SystemParams::with_tables(config, feature_tables).unwrap(), enrolled, probe }
}

fn run_sessions() -> (SessionTally, Duration) {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5e55_1011);
    let mut tables = HashMap::new();
    let mut tally = SessionTally::default();
    for i in 0..SESSIONS {
        let mut case = random_case(&mut tables, &mut rng);
        // One session in ten runs on the smaller curve.
        if i % 10 == 9 {
            let mut config = case.params.config().clone();
            config.group = GroupId::Secp112r1;
            case.params = SystemParams::with_tables(config, case.params.tables().to_vec()).unwrap();
            run_session::<Secp112r1>(&case, i, &mut rng, &mut tally);
        } else {
            run_session::<Ristretto255>(&case, i, &mut rng, &mut tally);
        }
    }
    (tally, start.elapsed())
}

fn criterion_1(tally: &SessionTally, elapsed: Duration) -> Verdict {
    let pass = tally.sessions >= SESSIONS && tally.mismatches == 0 && elapsed <= Duration::from_secs(600);
    verdict(
        pass,
        format!(
            "{} sessions ({} accept, {} reject), {} verdict mismatches, {:.1} s",
            tally.sessions,
            tally.accepts,
            tally.rejects,
            tally.mismatches,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7(tally: &SessionTally) -> Verdict {
    let pass = tally.sessions >= SESSIONS && tally.leaks.is_empty() && tally.bad_zero_counts == 0;
    let mut detail = format!(
        "{} sessions, {} leak findings, {} compare sets with the wrong number of zeros",
        tally.sessions,
        tally.leaks.len(),
        tally.bad_zero_counts
    );
    if let Some(first) = tally.leaks.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// Accuracy (criteria 2 and 3)

fn trials(fs: &FeatureSet, cmp: Comparator, users: usize, captures: usize, impostors: usize, seed: u64) -> TrialSet {
    let pop = evaluation::gen_population(fs, users, captures, seed);
    let plan = evaluation::plan_pairs(&pop, impostors, seed + 1).unwrap();
    evaluation::score_trials(fs, cmp, &pop, &plan).unwrap()
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let fs = FeatureSet::fs1();
    let (users, captures, impostors, seed) = (200, 10, 100_000, 1);
    let cont = evaluation::eer(&trials(&fs, Comparator::Continuous, users, captures, impostors, seed)).unwrap();
    let quant =
        evaluation::eer(&trials(&fs, Comparator::Quantized { bits: 4, delta: 1.0 }, users, captures, impostors, seed))
            .unwrap();
    let gap = quant.eer - cont.eer;
    let elapsed = start.elapsed();
    let pass = quant.eer <= 0.005 && gap.abs() <= 0.002 && elapsed <= Duration::from_secs(900);
    verdict(
        pass,
        format!(
            "fs1 b=4 delta=1: quantized EER {:.3}%, continuous {:.3}%, gap {:+.3} pp, {:.1} s",
            quant.eer * 100.0,
            cont.eer * 100.0,
            gap * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Verdict {
    let fs = FeatureSet::single(0.9).unwrap();
    let (users, captures, impostors, seed) = (20_000, 10, 2_000_000, 3);
    let eer = |bits, delta| {
        evaluation::eer(&trials(&fs, Comparator::Quantized { bits, delta }, users, captures, impostors, seed))
            .unwrap()
            .eer
    };
    let b4 = eer(4, 1.0);
    let b6 = eer(6, 1.0);
    let fine = eer(4, 0.25);
    let bits_gap = b4 - b6;
    let delta_gap = b4 - fine;
    let pass = bits_gap <= 0.0015 && delta_gap <= 0.0015;
    verdict(
        pass,
        format!(
            "rho=0.9: EER b4/d1 {:.3}%, b6/d1 {:.3}%, b4/d0.25 {:.3}%; bits gap {:+.3} pp ({}), delta gap {:+.3} pp ({})",
            b4 * 100.0,
            b6 * 100.0,
            fine * 100.0,
            bits_gap * 100.0,
            if bits_gap <= 0.0015 { "ok" } else { "over 0.15" },
            delta_gap * 100.0,
            if delta_gap <= 0.0015 { "ok" } else { "over 0.15" },
        ),
    )
}

// ---------------------------------------------------------------------------
// Timing (criterion 4)

fn criterion_4() -> Verdict {
    let rows = evaluation::bench_alpha(GroupId::Ristretto255, &BENCH_ALPHAS, 31, 4).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_ms).collect();
    let fit = evaluation::linear_fit(&xs, &ys);
    let medians: Vec<String> = rows.iter().map(|r| format!("{}:{:.2}", r.alpha, r.median_ms)).collect();
    verdict(
        fit.r_squared >= 0.99,
        format!(
            "R^2 = {:.5}, {:.3} ms per element; medians (alpha:ms) {}",
            fit.r_squared,
            fit.slope,
            medians.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Crypto properties (criterion 5)

const CASES: usize = 1000;

fn crypto_properties<G: PrimeGroup>(seed: u64) -> Vec<(&'static str, usize)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut failures: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut check = |name: &'static str, ok: bool| {
        *failures.entry(name).or_insert(0) += usize::from(!ok);
    };
    let same = |a: &Ciphertext<G>, b: &Ciphertext<G>| a.c1 == b.c1 && a.c2 == b.c2;
    for _ in 0..CASES {
        let km = keygen::<G, _>(&mut rng);
        let m = rng.random_range(-1_000_000i64..=1_000_000);
        let n = rng.random_range(-1_000_000i64..=1_000_000);
        let ct = encrypt(m, &km.public, &mut rng);

        check("round-trip", decrypt(&ct, &km.secret) == message_point::<G>(m));

        let sum = add(&ct, &encrypt(n, &km.public, &mut rng));
        check("additive homomorphism", decrypt(&sum, &km.secret) == message_point::<G>(m + n));

        let joint = final_decrypt(&partial_decrypt(&ct, &km.service), &km.sensor);
        check("threshold split", joint == message_point::<G>(m));

        let r = G::random_nonzero_scalar(&mut rng);
        let zero = scalar_mul(&encrypt(0, &km.public, &mut rng), &r).unwrap();
        let nonzero_m = if m == 0 { 1 } else { m };
        let blinded = scalar_mul(&encrypt(nonzero_m, &km.public, &mut rng), &r).unwrap();
        check(
            "blinding soundness",
            is_zero::<G>(&decrypt(&zero, &km.secret)) && !is_zero::<G>(&decrypt(&blinded, &km.secret)),
        );

        let again = encrypt(m, &km.public, &mut rng);
        let rerandomized = add(&ct, &encrypt(0, &km.public, &mut rng));
        check(
            "rerandomization distinctness",
            !same(&ct, &again)
                && !same(&ct, &rerandomized)
                && decrypt(&rerandomized, &km.secret) == message_point::<G>(m),
        );
    }
    failures.into_iter().collect()
}

fn criterion_5() -> Verdict {
    let mut parts = Vec::new();
    let mut total = 0;
    for (group, results) in
        [("ristretto255", crypto_properties::<Ristretto255>(51)), ("secp112r1", crypto_properties::<Secp112r1>(52))]
    {
        let failed: usize = results.iter().map(|(_, f)| f).sum();
        total += failed;
        let names: Vec<String> = results.iter().map(|(name, f)| format!("{name} {f}")).collect();
        parts.push(format!("{group}: {}", names.join(", ")));
    }
    verdict(total == 0, format!("{CASES} cases per property, failures by property: {}", parts.join("; ")))
}

// ---------------------------------------------------------------------------
// Quantization properties (criterion 6)

fn enumerate(tables: &[LookupTable]) -> BTreeMap<i64, u64> {
    let n = tables[0].size();
    let cells = n * n;
    let mut out = BTreeMap::new();
    for mut idx in 0..cells.pow(tables.len() as u32) {
        let mut score = 0i64;
        for t in tables {
            let c = idx % cells;
            idx /= cells;
            score += t.get(c / n, c % n) as i64;
        }
        *out.entry(score).or_insert(0) += 1;
    }
    out
}

fn criterion_6() -> Verdict {
    let mut problems = Vec::new();

    let draws = 1_000_000usize;
    for bits in 1..=6u8 {
        let bins = make_bins(bits).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(600 + bits as u64);
        let mut counts = vec![0usize; bins.bin_count()];
        for _ in 0..draws {
            counts[quantize_feature(gaussian(&mut rng), &bins).unwrap()] += 1;
        }
        let p = 1.0 / bins.bin_count() as f64;
        let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
        for (bin, &c) in counts.iter().enumerate() {
            if (c as f64 - mean).abs() > 3.0 * sd {
                problems.push(format!("b={bits} bin {bin} holds {c} of {draws}"));
            }
        }
    }

    let rhos = [0.1, 0.5, 0.7, 0.9, 0.95, 0.99];
    for bits in 1..=6u8 {
        let bins = make_bins(bits).unwrap();
        for &rho in &rhos {
            for delta in [0.25, 0.5, 1.0, 2.0] {
                let t = build_table(bits, rho, delta).unwrap();
                let n = t.size();
                let broken = (0..n)
                    .any(|x| (0..n).any(|y| t.get(x, y) != t.get(y, x) || t.get(x, y) != t.get(n - 1 - x, n - 1 - y)));
                if broken {
                    problems.push(format!("table b={bits} rho={rho} delta={delta} not symmetric"));
                }
            }
            let cells = (1u64 << (2 * bits)) as f64;
            let total: f64 = raw_table(&bins, rho).unwrap().iter().map(|v| v.exp()).sum();
            if (total - cells).abs() > 1e-6 * cells {
                problems.push(format!("b={bits} rho={rho}: sum of exp = {total}, want {cells}"));
            }
        }
    }

    let conv_rhos = [0.7, 0.85, 0.93];
    for bits in 1..=3u8 {
        for k in 1..=3usize {
            let tables: Vec<LookupTable> = conv_rhos[..k].iter().map(|&r| build_table(bits, r, 1.0).unwrap()).collect();
            let conv = convolve(&tables.iter().map(table_score_distribution).collect::<Vec<_>>()).unwrap();
            let counts = enumerate(&tables);
            let total = ((tables[0].size() * tables[0].size()) as u64).pow(k as u32) as f64;
            let exact = conv.min() == *counts.keys().next().unwrap()
                && conv.max() == *counts.keys().last().unwrap()
                && (conv.min()..=conv.max())
                    .all(|s| conv.prob(s) == counts.get(&s).copied().unwrap_or(0) as f64 / total);
            if !exact {
                problems.push(format!("convolution differs from enumeration at b={bits} k={k}"));
            }
        }
    }

    let detail = if problems.is_empty() {
        "bin occupancy (b=1..6, 10^6 draws), symmetry and reflection, normalization, convolution vs enumeration".into()
    } else {
        format!("{} problems; first: {}", problems.len(), problems[0])
    };
    verdict(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let mut results: Vec<(u8, Verdict)> = Vec::new();
    let mut report = |id: u8, v: Verdict| {
        println!("criterion {id}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, v));
    };

    let (tally, elapsed) = run_sessions();
    report(1, criterion_1(&tally, elapsed));
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7(&tally));

    let failed: Vec<String> = results.iter().filter(|(_, v)| !v.pass).map(|(id, _)| id.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
