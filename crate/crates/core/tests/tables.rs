use std::collections::BTreeMap;

use biomatch_core::quantization::{
    build_table, convolve, make_bins, quantize_feature, table_score_distribution, LookupTable, MAX_BITS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

#[test]
fn bins_are_equiprobable() {
    let draws = 1_000_000usize;
    for bits in 1..=6u8 {
        let bins = make_bins(bits).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(100 + bits as u64);
        let mut counts = vec![0usize; bins.bin_count()];
        for _ in 0..draws {
            let x: f64 = rng.sample(StandardNormal);
            counts[quantize_feature(x, &bins).unwrap()] += 1;
        }
        let p = 1.0 / bins.bin_count() as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (bin, &c) in counts.iter().enumerate() {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "b={bits} bin {bin}: {c} vs {mean} ± {sd}");
        }
    }
}

#[test]
fn boundary_values_land_in_upper_bin() {
    for bits in 1..=MAX_BITS {
        let bins = make_bins(bits).unwrap();
        let edges = bins.boundaries();
        for (j, &edge) in edges[1..edges.len() - 1].iter().enumerate() {
            assert_eq!(quantize_feature(edge, &bins).unwrap(), j + 1);
        }
    }
}

fn enumerate(tables: &[LookupTable]) -> BTreeMap<i64, f64> {
    let mut out = BTreeMap::new();
    let n = tables[0].size();
    let cells = n * n;
    let total = cells.pow(tables.len() as u32);
    for mut idx in 0..total {
        let mut score = 0i64;
        for t in tables {
            let c = idx % cells;
            idx /= cells;
            score += t.get(c / n, c % n) as i64;
        }
        *out.entry(score).or_insert(0.0) += 1.0 / total as f64;
    }
    out
}

#[test]
fn convolution_matches_enumeration() {
    let rhos = [0.7, 0.85, 0.93];
    for bits in 1..=3u8 {
        for k in 1..=3usize {
            if bits == 3 && k == 3 {
                continue;
            }
            let tables: Vec<_> = rhos[..k].iter().map(|&r| build_table(bits, r, 1.0).unwrap()).collect();
            let dists: Vec<_> = tables.iter().map(table_score_distribution).collect();
            let conv = convolve(&dists).unwrap();
            let brute = enumerate(&tables);
            assert_eq!(conv.min(), *brute.keys().next().unwrap());
            assert_eq!(conv.max(), *brute.keys().last().unwrap());
            for s in conv.min()..=conv.max() {
                let want = brute.get(&s).copied().unwrap_or(0.0);
                assert!((conv.prob(s) - want).abs() < 1e-12, "b={bits} k={k} s={s}");
            }
        }
    }
    // b = 3, k = 3 has 2^18 joint cells; still cheap enough.
    let tables: Vec<_> = rhos.iter().map(|&r| build_table(3, r, 1.0).unwrap()).collect();
    let dists: Vec<_> = tables.iter().map(table_score_distribution).collect();
    let conv = convolve(&dists).unwrap();
    for (s, p) in enumerate(&tables) {
        assert!((conv.prob(s) - p).abs() < 1e-12);
    }
}

#[test]
fn eight_bit_table_builds() {
    let t = build_table(8, 0.9, 1.0).unwrap();
    assert_eq!(t.scores().len(), 1 << 16);
    assert!(t.get(0, 0) > t.get(0, 255));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tables_are_symmetric_and_reflected(bits in 1u8..=5, rho in 0.0f64..0.99, delta in 0.1f64..3.0) {
        let t = build_table(bits, rho, delta).unwrap();
        let n = t.size();
        for x in 0..n {
            for y in 0..n {
                prop_assert_eq!(t.get(x, y), t.get(y, x));
                prop_assert_eq!(t.get(x, y), t.get(n - 1 - x, n - 1 - y));
            }
        }
    }

    #[test]
    fn score_distribution_sums_to_one(bits in 1u8..=4, k in 1usize..6, rho in 0.5f64..0.95) {
        let t = build_table(bits, rho, 1.0).unwrap();
        let d = table_score_distribution(&t);
        let conv = convolve(&vec![d; k]).unwrap();
        prop_assert!((conv.total() - 1.0).abs() < 1e-12);
        prop_assert_eq!(conv.min(), k as i64 * t.min_score() as i64);
        prop_assert_eq!(conv.max(), k as i64 * t.max_score() as i64);
        prop_assert!((conv.tail(conv.min()) - 1.0).abs() < 1e-12);
    }
}
