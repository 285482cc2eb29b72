//! `key = value` configuration files.
//!
//! ```text
//! # symmetric setup
//! h11 = 1.0
//! h12 = 0.6
//! h21 = 0.6
//! h22 = 1.0
//! sigma2 = 1.0
//! snr_db = 15
//! bandwidth_hz = 300e3
//! slot_ms = 5
//! packet_bits = 128
//! blocklength = 1000
//! q_hc = 1e-7
//! q_lc = 1e-3
//! ```
//!
//! Omitted keys keep their defaults. `sigma2` and `p_max` take one value for
//! both APs/UEs or two comma-separated values; `p_max` and `snr_db` are
//! mutually exclusive. `blocklength = inf` selects Shannon rates.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::model::{db_to_linear, Blocklength, ConfigError, ConfigParams, SystemConfig};

pub const KEYS: [&str; 13] = [
    "h11",
    "h12",
    "h21",
    "h22",
    "sigma2",
    "snr_db",
    "p_max",
    "bandwidth_hz",
    "slot_ms",
    "packet_bits",
    "blocklength",
    "q_hc",
    "q_lc",
];

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: `{value}`")]
    Value { line: usize, key: String, value: String },
    #[error("`snr_db` and `p_max` are mutually exclusive")]
    Conflict,
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn parse_pair(v: &str) -> Option<[f64; 2]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a] => a.parse().ok().map(|a: f64| [a, a]),
        [a, b] => Some([a.parse().ok()?, b.parse().ok()?]),
        _ => None,
    }
}

/// Parse configuration text. `allow_short_blocklength` lifts the minimum
/// blocklength check.
pub fn parse_config(text: &str, allow_short_blocklength: bool) -> Result<SystemConfig, ConfigFileError> {
    let mut p = ConfigParams {
        allow_short_blocklength,
        ..ConfigParams::default()
    };
    let mut seen = HashSet::new();
    let mut snr_db = None;
    let mut p_max_given = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or(ConfigFileError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigFileError::UnknownKey { line, key: key.to_owned() });
        }
        if !seen.insert(key.to_owned()) {
            return Err(ConfigFileError::Duplicate { line, key: key.to_owned() });
        }
        let bad = || ConfigFileError::Value {
            line,
            key: key.to_owned(),
            value: value.to_owned(),
        };
        let num = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "h11" => p.h[0][0] = num()?,
            "h12" => p.h[0][1] = num()?,
            "h21" => p.h[1][0] = num()?,
            "h22" => p.h[1][1] = num()?,
            "sigma2" => p.sigma2 = parse_pair(value).ok_or_else(bad)?,
            "p_max" => {
                p.p_max = parse_pair(value).ok_or_else(bad)?;
                p_max_given = true;
            }
            "snr_db" => snr_db = Some(num()?),
            "bandwidth_hz" => p.bandwidth_hz = num()?,
            "slot_ms" => p.slot_s = num()? * 1e-3,
            "packet_bits" => p.packet_bits = value.parse().map_err(|_| bad())?,
            "blocklength" => {
                p.blocklength = if value.eq_ignore_ascii_case("inf") {
                    Blocklength::Infinite
                } else {
                    Blocklength::Finite(value.parse().map_err(|_| bad())?)
                }
            }
            "q_hc" => p.q_hc = num()?,
            "q_lc" => p.q_lc = num()?,
            _ => unreachable!("key list checked above"),
        }
    }
    match (snr_db, p_max_given) {
        (Some(_), true) => return Err(ConfigFileError::Conflict),
        (Some(db), false) => {
            let s = db_to_linear(db);
            p.p_max = [s * p.sigma2[0], s * p.sigma2[1]];
        }
        _ => {}
    }
    Ok(SystemConfig::new(p)?)
}

pub fn load_config(path: &Path, allow_short_blocklength: bool) -> Result<SystemConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, allow_short_blocklength)
}
