//! Equiprobable feature bins, quantized-LLR lookup tables and the exact
//! distribution of summed table scores.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use libm::{log, round};

use crate::error::{Error, Result};
use crate::stats::{bvn_rect_prob, norm_inv_cdf, FeatureModel};

pub const MAX_BITS: u8 = 8;

/// Raw log-ratio used when a genuine rectangle mass evaluates to zero.
fn underflow_floor(bits: u8) -> f64 {
    log(1e-300) + 2.0 * bits as f64 * LN_2
}

/// `2^b` bins of equal standard-normal mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BinScheme {
    bits: u8,
    boundaries: Vec<f64>,
}

impl BinScheme {
    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn bin_count(&self) -> usize {
        1 << self.bits
    }

    /// `2^b + 1` boundaries, starting at `-inf` and ending at `+inf`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `(lower, upper)` bounds of a bin.
    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.boundaries[bin], self.boundaries[bin + 1])
    }
}

/// Builds the equiprobable bin scheme for `bits` bits per feature.
pub fn make_bins(bits: u8) -> Result<BinScheme> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::BitsOutOfRange(bits));
    }
    let n = 1usize << bits;
    let mut boundaries = Vec::with_capacity(n + 1);
    boundaries.push(f64::NEG_INFINITY);
    for j in 1..n {
        boundaries.push(norm_inv_cdf(j as f64 / n as f64)?);
    }
    boundaries.push(f64::INFINITY);
    Ok(BinScheme { bits, boundaries })
}

/// Index of the half-open bin `[lower, upper)` containing `x`.
pub fn quantize_feature(x: f64, bins: &BinScheme) -> Result<usize> {
    if x.is_nan() {
        return Err(Error::Domain("cannot quantize NaN"));
    }
    let interior = &bins.boundaries[1..bins.boundaries.len() - 1];
    Ok(interior.partition_point(|&bound| bound <= x))
}

/// Log of the genuine-over-impostor mass of the rectangle `bin_x × bin_y`.
///
/// The impostor mass is exactly `2^{-2b}` because the bins are equiprobable
/// and the impostor density factorises.
pub fn quantized_llr(x: usize, y: usize, bins: &BinScheme, rho: f64) -> Result<f64> {
    let model = FeatureModel::new(rho)?;
    let n = bins.bin_count();
    if x >= n || y >= n {
        return Err(Error::Domain("bin index out of range"));
    }
    if model.rho() == 0.0 {
        return Ok(0.0);
    }
    let (xlo, xhi) = bins.bounds(x);
    let (ylo, yhi) = bins.bounds(y);
    let mass = bvn_rect_prob(xlo, xhi, ylo, yhi, model.rho())?;
    let bits = bins.bits as f64;
    if mass <= 0.0 {
        return Ok(underflow_floor(bins.bits));
    }
    Ok(log(mass) + 2.0 * bits * LN_2)
}

/// Uniform score quantizer: nearest multiple of `delta`, ties away from zero.
pub fn quantize_score(s: f64, delta: f64) -> i64 {
    debug_assert!(delta > 0.0);
    round(s / delta) as i64
}

/// Visits each cell once per symmetry orbit `{(x,y), (y,x), (x',y'), (y',x')}`
/// with `x' = n-1-x`, handing `f` the canonical representative.
fn fill_by_orbit<T: Copy>(n: usize, mut f: impl FnMut(usize, usize) -> Result<T>) -> Result<Vec<T>> {
    let mut cells: Vec<Option<T>> = vec![None; n * n];
    for x in 0..n {
        for y in 0..n {
            if cells[x * n + y].is_some() {
                continue;
            }
            let value = f(x, y)?;
            let (rx, ry) = (n - 1 - x, n - 1 - y);
            for (a, b) in [(x, y), (y, x), (rx, ry), (ry, rx)] {
                cells[a * n + b] = Some(value);
            }
        }
    }
    Ok(cells.into_iter().map(|c| c.expect("every orbit visited")).collect())
}

/// Real-valued table `λ'(x, y)` before score quantization, row-major.
pub fn raw_table(bins: &BinScheme, rho: f64) -> Result<Vec<f64>> {
    fill_by_orbit(bins.bin_count(), |x, y| quantized_llr(x, y, bins, rho))
}

/// A `2^b × 2^b` matrix of quantized scores for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    bits: u8,
    rho: f64,
    delta: f64,
    scores: Vec<i32>,
}

impl LookupTable {
    /// Assembles a table from its parts, checking shape and symmetry.
    pub fn from_parts(bits: u8, rho: f64, delta: f64, scores: Vec<i32>) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::BitsOutOfRange(bits));
        }
        FeatureModel::new(rho)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain("score step must be positive and finite"));
        }
        let n = 1usize << bits;
        if scores.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, actual: scores.len() });
        }
        for x in 0..n {
            for y in 0..x {
                if scores[x * n + y] != scores[y * n + x] {
                    return Err(Error::Domain("lookup table is not symmetric"));
                }
            }
        }
        Ok(Self { bits, rho, delta, scores })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn size(&self) -> usize {
        1 << self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.scores[x * self.size() + y]
    }

    /// Row `x`: the scores of enrollment bin `x` against every probe bin.
    pub fn row(&self, x: usize) -> &[i32] {
        let n = self.size();
        &self.scores[x * n..(x + 1) * n]
    }

    /// All scores, row-major.
    pub fn scores(&self) -> &[i32] {
        &self.scores
    }

    pub fn min_score(&self) -> i32 {
        self.scores.iter().copied().min().unwrap_or(0)
    }

    pub fn max_score(&self) -> i32 {
        self.scores.iter().copied().max().unwrap_or(0)
    }

    /// Serializes to the versioned `QLRT` blob.
    ///
    /// Layout: `"QLRT"`, version `u8`, bits `u8`, delta `f64` BE, rho `f64`
    /// BE, then `2^{2b}` `i32` BE scores row-major.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_HEADER + 4 * self.scores.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.push(self.bits);
        out.extend_from_slice(&self.delta.to_be_bytes());
        out.extend_from_slice(&self.rho.to_be_bytes());
        for s in &self.scores {
            out.extend_from_slice(&s.to_be_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BLOB_HEADER || &bytes[..4] != BLOB_MAGIC {
            return Err(Error::InvalidEncoding("not a QLRT table blob"));
        }
        if bytes[4] != BLOB_VERSION {
            return Err(Error::InvalidEncoding("unsupported QLRT version"));
        }
        let bits = bytes[5];
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::BitsOutOfRange(bits));
        }
        let f64_at = |i: usize| f64::from_be_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let delta = f64_at(6);
        let rho = f64_at(14);
        let body = &bytes[BLOB_HEADER..];
        let cells = 1usize << (2 * bits);
        if body.len() != 4 * cells {
            return Err(Error::InvalidEncoding("QLRT body length"));
        }
        let scores = body.chunks_exact(4).map(|c| i32::from_be_bytes(c.try_into().expect("4 bytes"))).collect();
        Self::from_parts(bits, rho, delta, scores)
    }
}

const BLOB_MAGIC: &[u8; 4] = b"QLRT";
const BLOB_VERSION: u8 = 1;
const BLOB_HEADER: usize = 22;

/// Builds `T_{b,rho}` with score step `delta`.
pub fn build_table(bits: u8, rho: f64, delta: f64) -> Result<LookupTable> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain("score step must be positive and finite"));
    }
    let bins = make_bins(bits)?;
    build_table_with_bins(&bins, rho, delta)
}

pub fn build_table_with_bins(bins: &BinScheme, rho: f64, delta: f64) -> Result<LookupTable> {
    let scores = fill_by_orbit(bins.bin_count(), |x, y| {
        let q = quantize_score(quantized_llr(x, y, bins, rho)?, delta);
        i32::try_from(q).map_err(|_| Error::Domain("quantized score exceeds 32 bits"))
    })?;
    LookupTable::from_parts(bins.bits, rho, delta, scores)
}

/// Probability mass over a contiguous integer score range.
///
/// Stored densely from `min` upward; both ends carry nonzero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    min: i64,
    mass: Vec<f64>,
}

impl ScoreDistribution {
    /// Builds a distribution from `(score, mass)` pairs. Zero masses are dropped.
    pub fn from_masses(pairs: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let pairs: Vec<(i64, f64)> = pairs.into_iter().filter(|&(_, m)| m != 0.0).collect();
        if pairs.iter().any(|&(_, m)| m.is_nan() || m < 0.0) {
            return Err(Error::Domain("masses must be positive"));
        }
        let min = pairs.iter().map(|p| p.0).min().ok_or(Error::Domain("empty distribution"))?;
        let max = pairs.iter().map(|p| p.0).max().unwrap_or(min);
        let mut mass = vec![0.0; (max - min) as usize + 1];
        for (score, m) in pairs {
            mass[(score - min) as usize] += m;
        }
        Ok(Self { min, mass })
    }

    pub fn point(score: i64) -> Self {
        Self { min: score, mass: vec![1.0] }
    }

    pub fn min(&self) -> i64 {
        self.min
    }

    pub fn max(&self) -> i64 {
        self.min + self.mass.len() as i64 - 1
    }

    pub fn prob(&self, score: i64) -> f64 {
        if score < self.min || score > self.max() {
            return 0.0;
        }
        self.mass[(score - self.min) as usize]
    }

    /// Nonzero `(score, mass)` pairs in increasing score order.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass.iter().enumerate().filter(|(_, &m)| m != 0.0).map(move |(i, &m)| (self.min + i as i64, m))
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `P(S >= t)`
    pub fn tail(&self, threshold: i64) -> f64 {
        self.support().filter(|&(s, _)| s >= threshold).map(|(_, m)| m).sum()
    }
}

/// Score distribution of one table under the impostor model, where every
/// cell has mass `2^{-2b}`.
pub fn table_score_distribution(table: &LookupTable) -> ScoreDistribution {
    let cell = 1.0 / table.scores.len() as f64;
    let min = table.min_score() as i64;
    let mut mass = vec![0.0; (table.max_score() as i64 - min) as usize + 1];
    for &s in &table.scores {
        mass[(s as i64 - min) as usize] += cell;
    }
    ScoreDistribution { min, mass }
}

/// Distribution of the sum of independent scores.
pub fn convolve(dists: &[ScoreDistribution]) -> Result<ScoreDistribution> {
    let (first, rest) = dists.split_first().ok_or(Error::Domain("nothing to convolve"))?;
    let mut acc = first.clone();
    for d in rest {
        let mut mass = vec![0.0; acc.mass.len() + d.mass.len() - 1];
        for (i, &a) in acc.mass.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in d.mass.iter().enumerate() {
                mass[i + j] += a * b;
            }
        }
        acc = ScoreDistribution { min: acc.min + d.min, mass };
    }
    Ok(acc)
}
