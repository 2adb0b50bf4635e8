//! Text configuration shared by the sensor and the service.
//!
//! One `key = value` per line; `#` starts a comment.
//!
//! ```text
//! group = ristretto255      # or secp112r1
//! bits = 4                  # bits per feature
//! delta = 1                 # score step
//! threshold = 12            # accept when the summed score is >= threshold
//! rho = 0.70, 0.71, 0.72    # one between-user variance per feature
//! score_max = 187           # optional; checked against the tables
//! ```
//!
//! `feature_set = fs1|fs2|fs3` may replace `rho`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use biomatch_core::protocol::{SystemConfig, SystemParams};
use biomatch_core::GroupId;

use crate::evaluation::FeatureSet;
use crate::Error;

const KEYS: [&str; 7] = ["group", "bits", "delta", "threshold", "rho", "feature_set", "score_max"];

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub system: SystemConfig,
    pub score_max: Option<i64>,
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, Error> {
    map.get(key).map(String::as_str).ok_or_else(|| Error::Config(format!("missing `{key}`")))
}

fn number<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, Error> {
    let raw = field(map, key)?;
    raw.parse().map_err(|_| Error::Config(format!("`{key}` is not a valid number: {raw}")))
}

pub fn parse(text: &str) -> Result<ConfigFile, Error> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
        }
    }
    let group: GroupId = field(&map, "group")?.parse()?;
    let rhos = match (map.get("rho"), map.get("feature_set")) {
        (Some(list), None) => list
            .split(',')
            .map(|r| r.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad rho value `{}`", r.trim()))))
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(name)) => {
            FeatureSet::by_name(name).ok_or_else(|| Error::Config(format!("unknown feature set `{name}`")))?.rhos
        }
        _ => return Err(Error::Config("give exactly one of `rho` and `feature_set`".into())),
    };
    let score_max = if map.contains_key("score_max") { Some(number(&map, "score_max")?) } else { None };
    Ok(ConfigFile {
        system: SystemConfig {
            group,
            bits: number(&map, "bits")?,
            delta: number(&map, "delta")?,
            rhos,
            threshold: number(&map, "threshold")?,
        },
        score_max,
    })
}

/// Builds tables and checks the optional `score_max`.
pub fn to_params(file: ConfigFile) -> Result<SystemParams, Error> {
    let params = SystemParams::new(file.system)?;
    if let Some(max) = file.score_max {
        if max != params.score_max() {
            return Err(Error::Config(format!("score_max is {max} but the tables give {}", params.score_max())));
        }
    }
    Ok(params)
}

pub fn load(path: &Path) -> Result<SystemParams, Error> {
    let text = std::fs::read_to_string(path)?;
    to_params(parse(&text)?)
}

/// Writes a configuration in the text format, including the score domain.
pub fn render(params: &SystemParams) -> String {
    let c = params.config();
    let mut out = String::new();
    let rhos: Vec<String> = c.rhos.iter().map(|r| r.to_string()).collect();
    writeln!(out, "group = {}", c.group).unwrap();
    writeln!(out, "bits = {}", c.bits).unwrap();
    writeln!(out, "delta = {}", c.delta).unwrap();
    writeln!(out, "threshold = {}", c.threshold).unwrap();
    writeln!(out, "rho = {}", rhos.join(", ")).unwrap();
    writeln!(
        out,
        "# score domain [{}, {}], compare set size {}",
        params.score_min(),
        params.score_max(),
        params.alpha() + 1
    )
    .unwrap();
    writeln!(out, "score_max = {}", params.score_max()).unwrap();
    out
}
