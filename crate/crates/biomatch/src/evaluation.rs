//! Synthetic populations, trial scoring, EER/ROC and protocol timing.

use std::io::{self, Write};
use std::time::Instant;

use biomatch_core::elgamal::{encrypt, keygen};
use biomatch_core::protocol::{sensor_decide, service_compare, SystemConfig, SystemParams};
use biomatch_core::quantization::{build_table_with_bins, make_bins, quantize_feature, LookupTable};
use biomatch_core::stats::{llr_continuous, FeatureModel};
use biomatch_core::{GroupId, PrimeGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::Error;

/// Named feature-variance profile.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub name: String,
    pub rhos: Vec<f64>,
}

impl FeatureSet {
    pub fn new(name: impl Into<String>, rhos: Vec<f64>) -> Result<Self, Error> {
        if rhos.is_empty() {
            return Err(Error::Config("feature set is empty".into()));
        }
        for &r in &rhos {
            FeatureModel::new(r)?;
        }
        Ok(Self { name: name.into(), rhos })
    }

    /// 21 features, rho from 0.70 to 0.90 in steps of 0.01.
    pub fn fs1() -> Self {
        let rhos = (0..21).map(|i| (70 + i) as f64 / 100.0).collect();
        Self { name: "fs1".into(), rhos }
    }

    /// 20 features, all rho 0.8.
    pub fn fs2() -> Self {
        Self { name: "fs2".into(), rhos: vec![0.8; 20] }
    }

    /// 12 features, four each of rho 0.7, 0.8 and 0.9.
    pub fn fs3() -> Self {
        let rhos = [0.7, 0.8, 0.9].iter().flat_map(|&r| [r; 4]).collect();
        Self { name: "fs3".into(), rhos }
    }

    pub fn single(rho: f64) -> Result<Self, Error> {
        Self::new(format!("single-{rho}"), vec![rho])
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "fs1" => Some(Self::fs1()),
            "fs2" => Some(Self::fs2()),
            "fs3" => Some(Self::fs3()),
            _ => None,
        }
    }

    pub fn k(&self) -> usize {
        self.rhos.len()
    }
}

/// Captures laid out user-major: `captures[(u * n_captures + c) * k + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub k: usize,
    pub n_users: usize,
    pub n_captures: usize,
    pub captures: Vec<f64>,
}

impl Population {
    pub fn capture(&self, user: usize, capture: usize) -> &[f64] {
        let start = (user * self.n_captures + capture) * self.k;
        &self.captures[start..start + self.k]
    }
}

/// Derives an independent ChaCha stream for one worker or one purpose.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `mu ~ N(0, rho_i)` per user and feature, each capture `mu + N(0, 1 - rho_i)`.
/// Users are generated on separate streams so the result does not depend on
/// the thread count.
pub fn gen_population(fs: &FeatureSet, n_users: usize, n_captures: usize, seed: u64) -> Population {
    let k = fs.k();
    let per_user: Vec<Vec<f64>> = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = stream_rng(seed, u as u64);
            let means: Vec<f64> =
                fs.rhos.iter().map(|&r| Normal::new(0.0, r.sqrt()).expect("finite sd").sample(&mut rng)).collect();
            let mut out = Vec::with_capacity(n_captures * k);
            for _ in 0..n_captures {
                for (i, &r) in fs.rhos.iter().enumerate() {
                    let noise = Normal::new(0.0, (1.0 - r).sqrt()).expect("finite sd");
                    out.push(means[i] + noise.sample(&mut rng));
                }
            }
            out
        })
        .collect();
    Population { k, n_users, n_captures, captures: per_user.concat() }
}

/// `(user_a, capture_a, user_b, capture_b)`.
pub type Pair = (u32, u32, u32, u32);

/// Which pairs get compared.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub genuine: Vec<Pair>,
    pub impostor: Vec<Pair>,
}

const PAIR_CHUNK: usize = 10_000;

/// Every same-user capture pair, plus `n_impostor` sampled cross-user pairs.
pub fn plan_pairs(pop: &Population, n_impostor: usize, seed: u64) -> Result<PairPlan, Error> {
    if pop.n_users < 2 || pop.n_captures < 2 {
        return Err(Error::Config("need at least two users with two captures each".into()));
    }
    let mut genuine = Vec::new();
    for u in 0..pop.n_users as u32 {
        for a in 0..pop.n_captures as u32 {
            for b in a + 1..pop.n_captures as u32 {
                genuine.push((u, a, u, b));
            }
        }
    }
    let (nu, nc) = (pop.n_users as u32, pop.n_captures as u32);
    let chunks = n_impostor.div_ceil(PAIR_CHUNK);
    let impostor = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = stream_rng(seed, (1 << 40) + chunk as u64);
            let len = PAIR_CHUNK.min(n_impostor - chunk * PAIR_CHUNK);
            (0..len)
                .map(|_| {
                    let ua = rng.random_range(0..nu);
                    let ub = (ua + rng.random_range(1..nu)) % nu;
                    (ua, rng.random_range(0..nc), ub, rng.random_range(0..nc))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(PairPlan { genuine, impostor })
}

/// How pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparator {
    Continuous,
    Quantized { bits: u8, delta: f64 },
}

/// Genuine and impostor comparison scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

/// Lookup tables for every feature of a set, sharing equal-rho builds.
pub fn tables_for(fs: &FeatureSet, bits: u8, delta: f64) -> Result<Vec<LookupTable>, Error> {
    let bins = make_bins(bits)?;
    let mut built: Vec<LookupTable> = Vec::new();
    let mut out = Vec::with_capacity(fs.k());
    for &rho in &fs.rhos {
        let table = match built.iter().find(|t| t.rho() == rho) {
            Some(t) => t.clone(),
            None => {
                let t = build_table_with_bins(&bins, rho, delta)?;
                built.push(t.clone());
                t
            }
        };
        out.push(table);
    }
    Ok(out)
}

pub fn score_trials(
    fs: &FeatureSet,
    comparator: Comparator,
    pop: &Population,
    plan: &PairPlan,
) -> Result<TrialSet, Error> {
    if pop.k != fs.k() {
        return Err(Error::Config(format!("population has {} features, set has {}", pop.k, fs.k())));
    }
    match comparator {
        Comparator::Continuous => {
            let models: Vec<FeatureModel> = fs.rhos.iter().map(|&r| FeatureModel::new(r)).collect::<Result<_, _>>()?;
            let score = |&(ua, ca, ub, cb): &Pair| -> f64 {
                let a = pop.capture(ua as usize, ca as usize);
                let b = pop.capture(ub as usize, cb as usize);
                a.iter().zip(b).zip(&models).map(|((&p, &t), m)| llr_continuous(p, t, m).expect("valid model")).sum()
            };
            Ok(TrialSet {
                genuine: plan.genuine.par_iter().map(score).collect(),
                impostor: plan.impostor.par_iter().map(score).collect(),
            })
        }
        Comparator::Quantized { bits, delta } => {
            let tables = tables_for(fs, bits, delta)?;
            let bins = make_bins(bits)?;
            let quantized: Vec<u16> =
                pop.captures.iter().map(|&x| quantize_feature(x, &bins).map(|b| b as u16)).collect::<Result<_, _>>()?;
            let k = pop.k;
            let row = |u: u32, c: u32| {
                let start = (u as usize * pop.n_captures + c as usize) * k;
                &quantized[start..start + k]
            };
            let score = |&(ua, ca, ub, cb): &Pair| -> f64 {
                let a = row(ua, ca);
                let b = row(ub, cb);
                let s: i64 =
                    tables.iter().zip(a.iter().zip(b)).map(|(t, (&x, &y))| t.get(x as usize, y as usize) as i64).sum();
                s as f64
            };
            Ok(TrialSet {
                genuine: plan.genuine.par_iter().map(score).collect(),
                impostor: plan.impostor.par_iter().map(score).collect(),
            })
        }
    }
}

/// Equal error rate and the (interpolated) threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
}

/// One operating point: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

impl RocPoint {
    pub fn gar(&self) -> f64 {
        1.0 - self.frr
    }
}

fn sorted(v: &[f64]) -> Result<Vec<f64>, Error> {
    if v.is_empty() {
        return Err(Error::Config("trial set has an empty class".into()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Config("trial scores contain NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Operating points for every distinct score, in increasing threshold order,
/// closed by a threshold above every score (FAR 0, FRR 1).
pub fn sweep(trials: &TrialSet) -> Result<Vec<RocPoint>, Error> {
    let g = sorted(&trials.genuine)?;
    let i = sorted(&trials.impostor)?;
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut out = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        while gi < g.len() && g[gi] < t {
            gi += 1;
        }
        while ii < i.len() && i[ii] < t {
            ii += 1;
        }
        out.push(RocPoint { threshold: t, far: (i.len() - ii) as f64 / ni, frr: gi as f64 / ng });
    }
    Ok(out)
}

/// EER by linear interpolation between the two thresholds where FAR - FRR
/// changes sign.
pub fn eer(trials: &TrialSet) -> Result<EerPoint, Error> {
    let points = sweep(trials)?;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.far - a.frr;
        let db = b.far - b.frr;
        if da >= 0.0 && db <= 0.0 {
            if da == db {
                return Ok(EerPoint { eer: a.far, threshold: a.threshold });
            }
            let f = da / (da - db);
            let threshold =
                if b.threshold.is_finite() { a.threshold + f * (b.threshold - a.threshold) } else { a.threshold };
            return Ok(EerPoint { eer: a.far + f * (b.far - a.far), threshold });
        }
    }
    unreachable!("the sweep starts with FAR >= FRR and ends with FAR < FRR")
}

/// ROC rows ordered by increasing FAR: `(threshold, FAR, GAR)`.
pub fn roc_points(trials: &TrialSet) -> Result<Vec<RocPoint>, Error> {
    let mut points = sweep(trials)?;
    points.reverse();
    Ok(points)
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "threshold,far,gar")?;
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.far, p.gar())?;
    }
    Ok(())
}

/// Median wall time of one compare round at a given set size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub alpha: u64,
    pub median_ms: f64,
}

pub const BENCH_ALPHAS: [u64; 7] = [10, 20, 30, 40, 50, 60, 80];

fn bench_group<G: PrimeGroup>(alphas: &[u64], reps: usize, seed: u64) -> Result<Vec<BenchRow>, Error> {
    let fs = FeatureSet::fs1();
    let base = SystemConfig { group: G::ID, bits: 4, delta: 1.0, rhos: fs.rhos.clone(), threshold: 0 };
    let params = SystemParams::new(base)?;
    let mut rng = stream_rng(seed, 0);
    let keys = keygen::<G, _>(&mut rng);
    let mut cases = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let threshold = params.score_max() - alpha as i64;
        let p = params.with_threshold(threshold)?;
        let score = encrypt(threshold, &keys.public, &mut rng);
        cases.push((p, score));
    }
    // Repetitions are interleaved across set sizes so drift in machine load
    // hits every size alike; the first pass only warms caches.
    let mut times = vec![Vec::with_capacity(reps); alphas.len()];
    for rep in 0..=reps {
        for ((p, score), t) in cases.iter().zip(&mut times) {
            let start = Instant::now();
            let set = service_compare(score, p, &keys.public, &keys.service, &mut rng)?;
            let verdict = sensor_decide(&set, &keys.sensor)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            assert!(verdict, "score at the threshold must be accepted");
            if rep > 0 {
                t.push(ms);
            }
        }
    }
    let rows = alphas
        .iter()
        .zip(&mut times)
        .map(|(&alpha, t)| {
            t.sort_by(f64::total_cmp);
            BenchRow { alpha, median_ms: median(t) }
        })
        .collect();
    Ok(rows)
}

/// Times `service_compare` plus `sensor_decide` for each set size on fs1
/// tables (b = 4, delta = 1); the threshold is placed `alpha` below the top
/// of the score domain.
pub fn bench_alpha(group: GroupId, alphas: &[u64], reps: usize, seed: u64) -> Result<Vec<BenchRow>, Error> {
    if reps == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    match group {
        GroupId::Ristretto255 => bench_group::<biomatch_core::Ristretto255>(alphas, reps, seed),
        GroupId::Secp112r1 => bench_group::<biomatch_core::Secp112r1>(alphas, reps, seed),
    }
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> io::Result<()> {
    writeln!(out, "alpha,median_ms")?;
    for r in rows {
        writeln!(out, "{},{:.4}", r.alpha, r.median_ms)?;
    }
    Ok(())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Least-squares line through the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r_squared }
}
