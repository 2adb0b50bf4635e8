use biomatch_core::quantization::{build_table, make_bins, quantized_llr, raw_table};
use biomatch_core::stats::{bvn_rect_prob, llr_continuous, norm_cdf, norm_inv_cdf, FeatureModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Rectangle mass by integrating the conditional distribution of Y given X
/// with composite Simpson on a truncated X range. Independent of the
/// bivariate CDF routine under test.
fn rect_by_conditional_quadrature(xlo: f64, xhi: f64, ylo: f64, yhi: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let phi = |x: f64| norm_cdf(x).unwrap();
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let interval = |l: f64, u: f64| if l > 0.0 { phi(-l) - phi(-u) } else { phi(u) - phi(l) };
    let f = |x: f64| pdf(x) * interval((ylo - rho * x) / s, (yhi - rho * x) / s);
    let a = xlo.max(-9.0);
    let b = xhi.min(9.0);
    if a >= b {
        return 0.0;
    }
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn inverse_cdf_round_trip_random() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let p: f64 = rng.random_range(1e-12..1.0 - 1e-12);
        let x = norm_inv_cdf(p).unwrap();
        assert!((norm_cdf(x).unwrap() - p).abs() <= 1e-9, "p = {p}");
    }
}

#[test]
fn inverse_cdf_monotone() {
    let mut prev = f64::NEG_INFINITY;
    for i in 1..100_000 {
        let x = norm_inv_cdf(i as f64 / 100_000.0).unwrap();
        assert!(x > prev);
        prev = x;
    }
}

#[test]
fn orthant_monte_carlo_oracle() {
    // 10^8 correlated pairs; the estimate must sit within 3 standard errors.
    let rho: f64 = 0.9;
    let s = (1.0 - rho * rho).sqrt();
    let n: u64 = 100_000_000;
    let threads = 8;
    let hits: u64 = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    let mut rng = ChaCha20Rng::seed_from_u64(900 + w);
                    let mut hits = 0u64;
                    for _ in 0..n / threads {
                        let x: f64 = rng.sample(StandardNormal);
                        let z: f64 = rng.sample(StandardNormal);
                        if x < 0.0 && rho * x + s * z < 0.0 {
                            hits += 1;
                        }
                    }
                    hits
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    let estimate = hits as f64 / n as f64;
    let se = (estimate * (1.0 - estimate) / n as f64).sqrt();
    let inf = f64::INFINITY;
    let value = bvn_rect_prob(-inf, 0.0, -inf, 0.0, rho).unwrap();
    assert!((value - estimate).abs() <= 3.0 * se, "{value} vs MC {estimate} ± {se}");
    // Frozen value, 1/4 + asin(0.9)/(2π).
    assert!((value - 0.428_216_853_435_646_86).abs() < 1e-10);
}

#[test]
fn rectangles_match_quadrature_oracle() {
    let inf = f64::INFINITY;
    let cases = [
        (-inf, -0.5, 0.2, 1.3, 0.9),
        (-1.0, 1.0, -1.0, 1.0, 0.7),
        (0.3, 0.8, -2.0, inf, 0.95),
        (-0.2, 2.5, -inf, 0.0, -0.6),
        (1.0, 2.0, 1.0, 2.0, 0.99),
        (-0.67, 0.0, 0.0, 0.67, 0.3),
        (0.5, inf, 0.5, inf, -0.95),
    ];
    for (xlo, xhi, ylo, yhi, rho) in cases {
        let got = bvn_rect_prob(xlo, xhi, ylo, yhi, rho).unwrap();
        let oracle = rect_by_conditional_quadrature(xlo, xhi, ylo, yhi, rho);
        assert!((got - oracle).abs() < 1e-10, "{:?}: {got} vs {oracle}", (xlo, xhi, ylo, yhi, rho));
    }
}

#[test]
fn table_cells_match_quadrature_oracle() {
    // b = 4, rho = 0.9: every cell against the independent integral.
    let bins = make_bins(4).unwrap();
    let table = build_table(4, 0.9, 1.0).unwrap();
    for x in 0..16 {
        for y in 0..16 {
            let (xlo, xhi) = bins.bounds(x);
            let (ylo, yhi) = bins.bounds(y);
            let mass = rect_by_conditional_quadrature(xlo, xhi, ylo, yhi, 0.9);
            let oracle = mass.ln() + 8.0 * std::f64::consts::LN_2;
            let llr = quantized_llr(x, y, &bins, 0.9).unwrap();
            assert!((llr - oracle).abs() < 1e-6, "cell ({x},{y}): {llr} vs {oracle}");
            assert_eq!(table.get(x, y) as f64, oracle.round());
        }
    }
}

#[test]
fn llr_vanishes_as_rho_shrinks() {
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.2).collect();
    let mut last = f64::INFINITY;
    for rho in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
        let model = FeatureModel::new(rho).unwrap();
        let sup = grid
            .iter()
            .flat_map(|&p| grid.iter().map(move |&t| (p, t)))
            .map(|(p, t)| llr_continuous(p, t, &model).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(sup < last);
        last = sup;
    }
    assert!(last < 1e-4);
}

#[test]
fn raw_tables_are_normalized() {
    for bits in 1..=6u8 {
        let bins = make_bins(bits).unwrap();
        for rho in [0.3, 0.7, 0.9] {
            let raw = raw_table(&bins, rho).unwrap();
            let cells = (1u64 << (2 * bits)) as f64;
            let total: f64 = raw.iter().map(|v| v.exp()).sum();
            assert!((total - cells).abs() <= 1e-6 * cells, "b={bits} rho={rho}: {total}");
        }
    }
}

proptest! {
    #[test]
    fn llr_symmetric(p in -6.0f64..6.0, t in -6.0f64..6.0, rho in 0.0f64..0.999) {
        let model = FeatureModel::new(rho).unwrap();
        prop_assert_eq!(llr_continuous(p, t, &model).unwrap(), llr_continuous(t, p, &model).unwrap());
    }

    #[test]
    fn rectangles_split_additively(
        xlo in -4.0f64..0.0,
        width in 0.01f64..4.0,
        frac in 0.01f64..0.99,
        ylo in -4.0f64..2.0,
        height in 0.01f64..4.0,
        rho in -0.99f64..0.99,
    ) {
        let xhi = xlo + width;
        let mid = xlo + frac * width;
        let yhi = ylo + height;
        let whole = bvn_rect_prob(xlo, xhi, ylo, yhi, rho).unwrap();
        let left = bvn_rect_prob(xlo, mid, ylo, yhi, rho).unwrap();
        let right = bvn_rect_prob(mid, xhi, ylo, yhi, rho).unwrap();
        prop_assert!((whole - left - right).abs() <= 1e-9);
    }

    #[test]
    fn rect_prob_is_a_probability(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0, rho in -0.999f64..0.999
    ) {
        let v = bvn_rect_prob(a.min(b), a.max(b), c.min(d), c.max(d), rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
