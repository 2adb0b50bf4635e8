//! Gaussian feature model, log-likelihood ratios and the normal-distribution
//! numerics the lookup tables are built from.
//!
//! A feature is modelled as `T = M + N` with a user component `M ~ N(0, rho)`
//! and capture noise `N ~ N(0, 1 - rho)`, so every feature is standard normal
//! overall. Two captures of the same user are jointly normal with correlation
//! `rho`; captures of different users are independent.
#![allow(clippy::excessive_precision)]

use core::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::{asin, erfc, exp, log, sin, sqrt};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Per-feature Gaussian parameters. `rho` is the between-user variance; the
/// within-user variance is implied by the unit total variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureModel {
    rho: f64,
}

impl FeatureModel {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain("between-user variance must lie in [0, 1)"));
        }
        Ok(Self { rho })
    }

    /// Between-user variance.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Within-user (noise) variance, `1 - rho`.
    pub fn sigma_w2(&self) -> f64 {
        1.0 - self.rho
    }

    pub fn covariance(&self) -> GenuineCovariance {
        GenuineCovariance { rho: self.rho }
    }
}

/// The 2x2 covariance `[[1, rho], [rho, 1]]` of a genuine (probe, template) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenuineCovariance {
    rho: f64,
}

impl GenuineCovariance {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_nan() {
            return Err(Error::Domain("correlation is NaN"));
        }
        if rho.abs() >= 1.0 {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn determinant(&self) -> f64 {
        1.0 - self.rho * self.rho
    }

    /// Entries of the inverse matrix as `(diagonal, off_diagonal)`.
    pub fn inverse(&self) -> (f64, f64) {
        let det = self.determinant();
        (1.0 / det, -self.rho / det)
    }

    /// `(p t) Σ⁻¹ (p t)ᵀ`
    pub fn quadratic_form(&self, p: f64, t: f64) -> f64 {
        let (d, o) = self.inverse();
        d * (p * p + t * t) + 2.0 * o * (p * t)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("norm_cdf of NaN"));
    }
    Ok(phi(x))
}

#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
fn pdf(x: f64) -> f64 {
    exp(-0.5 * x * x) / SQRT_2PI
}

// Acklam's rational approximation (relative error ~1.2e-9), then polished.
const ICDF_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ICDF_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ICDF_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ICDF_D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
const ICDF_P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    let (a, b, c, d) = (&ICDF_A, &ICDF_B, &ICDF_C, &ICDF_D);
    if p < ICDF_P_LOW {
        let q = sqrt(-2.0 * log(p));
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - ICDF_P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log(1.0 - p));
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    }
}

/// Inverse of the standard normal CDF on the open interval (0, 1).
pub fn norm_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("norm_inv_cdf requires 0 < p < 1"));
    }
    // Work in the lower half and reflect, so the result is exactly antisymmetric.
    if p > 0.5 {
        return norm_inv_cdf(1.0 - p).map(|x| -x);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = acklam(p);
    // Halley refinement against the erfc-backed CDF.
    for _ in 0..2 {
        let dens = pdf(x);
        if dens == 0.0 {
            break;
        }
        let u = (phi(x) - p) / dens;
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Gauss-Legendre half rules `(weight, abscissa)` for 6, 12 and 20 points.
const GL6: [(f64, f64); 3] = [
    (0.1713244923791705e+00, -0.9324695142031522e+00),
    (0.3607615730481384e+00, -0.6612093864662647e+00),
    (0.4679139345726904e+00, -0.2386191860831970e+00),
];
const GL12: [(f64, f64); 6] = [
    (0.4717533638651177e-01, -0.9815606342467191e+00),
    (0.1069393259953183e+00, -0.9041172563704750e+00),
    (0.1600783285433464e+00, -0.7699026741943050e+00),
    (0.2031674267230659e+00, -0.5873179542866171e+00),
    (0.2334925365383547e+00, -0.3678314989981802e+00),
    (0.2491470458134029e+00, -0.1252334085114692e+00),
];
const GL20: [(f64, f64); 10] = [
    (0.1761400713915212e-01, -0.9931285991850949e+00),
    (0.4060142980038694e-01, -0.9639719272779138e+00),
    (0.6267204833410906e-01, -0.9122344282513259e+00),
    (0.8327674157670475e-01, -0.8391169718222188e+00),
    (0.1019301198172404e+00, -0.7463319064601508e+00),
    (0.1181945319615184e+00, -0.6360536807265150e+00),
    (0.1316886384491766e+00, -0.5108670019508271e+00),
    (0.1420961093183821e+00, -0.3737060887154196e+00),
    (0.1491729864726037e+00, -0.2277858511416451e+00),
    (0.1527533871307259e+00, -0.7652652113349733e-01),
];

/// Upper orthant probability `P(X > h, Y > k)` for a standard bivariate
/// normal with correlation `r`, |r| < 1, finite limits.
///
/// Drezner-Wesolowsky quadrature with Genz's double-precision modifications
/// for |r| close to one.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let hk = h * k;
    if r.abs() < 0.925 {
        let mut bvn = 0.0;
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = asin(r);
            for &(w, x) in quad {
                for sign in [-1.0, 1.0] {
                    let sn = sin(asr * (sign * x + 1.0) / 2.0);
                    bvn += w * exp((sn * hk - hs) / (1.0 - sn * sn));
                }
            }
            bvn *= asr / (2.0 * two_pi);
        }
        return bvn + phi(-h) * phi(-k);
    }

    let (k, hk) = if r < 0.0 { (-k, -hk) } else { (k, hk) };
    let mut bvn = 0.0;
    let a_s = (1.0 - r) * (1.0 + r);
    let mut a = sqrt(a_s);
    let b_s = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let asr = -(b_s / a_s + hk) / 2.0;
    if asr > -100.0 {
        bvn = a * exp(asr) * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
    }
    if hk > -100.0 {
        let b = sqrt(b_s);
        bvn -= exp(-hk / 2.0) * SQRT_2PI * phi(-b / a) * b * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
    }
    a /= 2.0;
    for &(w, x) in quad {
        for sign in [-1.0, 1.0] {
            let xs = a * (sign * x + 1.0);
            let xs = xs * xs;
            let rs = sqrt(1.0 - xs);
            let asr = -(b_s / xs + hk) / 2.0;
            if asr > -100.0 {
                bvn += a
                    * w
                    * exp(asr)
                    * (exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn = -bvn / two_pi;
    if r > 0.0 {
        bvn + phi(-h.max(k))
    } else {
        let tail = phi(-h) - phi(-k);
        -bvn + if tail > 0.0 { tail } else { 0.0 }
    }
}

/// Joint CDF `P(X <= x, Y <= y)`, infinite limits allowed.
pub(crate) fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    match (x == f64::INFINITY, y == f64::INFINITY) {
        (true, true) => 1.0,
        (true, false) => phi(y),
        (false, true) => phi(x),
        (false, false) => bvn_upper(-x, -y, r),
    }
}

/// Probability mass of the standard bivariate normal with correlation `rho`
/// over `[xlo, xhi] x [ylo, yhi]`.
pub fn bvn_rect_prob(xlo: f64, xhi: f64, ylo: f64, yhi: f64, rho: f64) -> Result<f64> {
    if [xlo, xhi, ylo, yhi].iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("rectangle limit is NaN"));
    }
    if xlo > xhi || ylo > yhi {
        return Err(Error::Domain("rectangle limits out of order"));
    }
    let rho = GenuineCovariance::new(rho)?.rho();
    let mass = bvn_cdf(xhi, yhi, rho) - bvn_cdf(xlo, yhi, rho) - bvn_cdf(xhi, ylo, rho) + bvn_cdf(xlo, ylo, rho);
    if mass < TAIL_MASS {
        // Inclusion-exclusion loses relative accuracy on tiny cells.
        return Ok(rect_conditional(xlo, xhi, ylo, yhi, rho).clamp(0.0, 1.0));
    }
    Ok(mass.clamp(0.0, 1.0))
}

const TAIL_MASS: f64 = 1e-6;

/// `Phi(u) - Phi(l)` without cancellation in the upper tail.
fn phi_interval(l: f64, u: f64) -> f64 {
    if l > 0.0 {
        phi(-l) - phi(-u)
    } else {
        phi(u) - phi(l)
    }
}

fn gl20(a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL20.iter().map(|&(w, x)| w * (f(c + h * x) + f(c - h * x))).sum::<f64>() * h
}

fn gl12(a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL12.iter().map(|&(w, x)| w * (f(c + h * x) + f(c - h * x))).sum::<f64>() * h
}

fn adaptive(a: f64, b: f64, f: &impl Fn(f64) -> f64, tol: f64, depth: u32) -> f64 {
    let fine = gl20(a, b, f);
    if depth == 0 || (fine - gl12(a, b, f)).abs() <= tol * (b - a) {
        return fine;
    }
    let m = 0.5 * (a + b);
    adaptive(a, m, f, tol, depth - 1) + adaptive(m, b, f, tol, depth - 1)
}

/// Rectangle mass as the integral over `x` of the density times the
/// conditional probability of the `y` interval.
fn rect_conditional(xlo: f64, xhi: f64, ylo: f64, yhi: f64, rho: f64) -> f64 {
    let s = sqrt((1.0 - rho) * (1.0 + rho));
    let f = |x: f64| {
        let l = if ylo == f64::NEG_INFINITY { f64::NEG_INFINITY } else { (ylo - rho * x) / s };
        let u = if yhi == f64::INFINITY { f64::INFINITY } else { (yhi - rho * x) / s };
        pdf(x) * phi_interval(l, u)
    };
    let a = xlo.max(-39.0);
    let b = xhi.min(39.0);
    if a >= b {
        return 0.0;
    }
    // Unit-width seed panels so the rules see the peak; the rough total sets
    // the absolute tolerance.
    let panels = libm::ceil(b - a) as usize;
    let width = (b - a) / panels as f64;
    let lo = |i: usize| a + i as f64 * width;
    let rough: f64 = (0..panels).map(|i| gl20(lo(i), lo(i) + width, &f)).sum();
    if rough <= 0.0 {
        return 0.0;
    }
    let tol = 1e-11 * rough / (b - a);
    (0..panels).map(|i| adaptive(lo(i), lo(i) + width, &f, tol, 16)).sum()
}

/// Continuous log-likelihood ratio of a (probe, template) feature pair.
pub fn llr_continuous(p: f64, t: f64, model: &FeatureModel) -> Result<f64> {
    llr_with_covariance(p, t, &model.covariance())
}

pub(crate) fn llr_with_covariance(p: f64, t: f64, cov: &GenuineCovariance) -> Result<f64> {
    if cov.rho().abs() >= 1.0 {
        return Err(Error::SingularCovariance);
    }
    Ok(0.5 * ((p * p + t * t) - cov.quadratic_form(p, t)) - 0.5 * log(cov.determinant()))
}

/// Sum of per-feature log-likelihood ratios.
pub fn comparator_continuous(probe: &[f64], template: &[f64], models: &[FeatureModel]) -> Result<f64> {
    if probe.len() != template.len() {
        return Err(Error::LengthMismatch { expected: template.len(), actual: probe.len() });
    }
    if models.len() != probe.len() {
        return Err(Error::LengthMismatch { expected: probe.len(), actual: models.len() });
    }
    if probe.is_empty() {
        return Err(Error::Domain("comparator needs at least one feature"));
    }
    let mut score = 0.0;
    for ((&p, &t), model) in probe.iter().zip(template).zip(models) {
        score += llr_continuous(p, t, model)?;
    }
    Ok(score)
}
