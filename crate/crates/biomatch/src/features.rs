//! Feature vectors: the text file format and the synthetic capture source.
//!
//! A feature file starts with a header line `k=<count>` followed by one
//! vector per line as comma-separated decimals. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::evaluation::stream_rng;
use crate::Error;

pub fn parse(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let l = l.trim();
        !l.is_empty() && !l.starts_with('#')
    });
    let (_, header) = lines.next().ok_or_else(|| Error::Format("feature file is empty".into()))?;
    let k: usize = header
        .trim()
        .strip_prefix("k=")
        .and_then(|v| v.trim().parse().ok())
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::Format("feature file must start with `k=<count>`".into()))?;
    let mut out = Vec::new();
    for (n, line) in lines {
        let row = line
            .split(',')
            .map(|v| {
                let x: f64 =
                    v.trim().parse().map_err(|_| Error::Format(format!("line {}: bad value `{}`", n + 1, v.trim())))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Format(format!("line {}: value is not finite", n + 1)))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != k {
            return Err(Error::Format(format!("line {}: {} values, header says {k}", n + 1, row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn render(vectors: &[Vec<f64>]) -> String {
    let k = vectors.first().map_or(0, Vec::len);
    let mut out = format!("k={k}\n");
    for v in vectors {
        let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn load(path: &Path) -> Result<Vec<Vec<f64>>, Error> {
    parse(&std::fs::read_to_string(path)?)
}

/// Where a capture comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CaptureSource {
    /// Row `row` of a feature file.
    File { vectors: Vec<Vec<f64>>, row: usize },
    /// A synthetic user: mean `mu_i ~ N(0, rho_i)` drawn from `user_seed`,
    /// plus capture noise `N(0, 1 - rho_i)` drawn from stream `capture`.
    Synthetic { rhos: Vec<f64>, user_seed: u64, capture: u64 },
}

impl CaptureSource {
    /// The captured vector, checked against the expected feature count.
    pub fn capture(&self, k: usize) -> Result<Vec<f64>, Error> {
        let v = match self {
            CaptureSource::File { vectors, row } => {
                vectors.get(*row).cloned().ok_or_else(|| Error::Config(format!("feature file has no row {row}")))?
            }
            CaptureSource::Synthetic { rhos, user_seed, capture } => synthetic_capture(rhos, *user_seed, *capture)?,
        };
        if v.len() != k {
            return Err(Error::Config(format!("capture has {} features, configuration expects {k}", v.len())));
        }
        Ok(v)
    }
}

pub fn synthetic_capture(rhos: &[f64], user_seed: u64, capture: u64) -> Result<Vec<f64>, Error> {
    let mut user_rng = stream_rng(user_seed, 0);
    let mut noise_rng = stream_rng(user_seed, 1 + capture);
    rhos.iter()
        .map(|&r| {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config("rho must lie in [0, 1)".into()));
            }
            let mu = Normal::new(0.0, r.sqrt()).expect("finite sd").sample(&mut user_rng);
            Ok(mu + Normal::new(0.0, (1.0 - r).sqrt()).expect("finite sd").sample(&mut noise_rng))
        })
        .collect()
}
