//! Flat `key = value` configuration files.
//!
//! ```text
//! # priors
//! sigma_s = 4
//! tau = 0.1
//! simplex.max_iters = 3000
//! ```

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::objective::PosteriorMode;
use crate::optimize::MatchConfig;
use crate::priors::PriorError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("{0}")]
    Invalid(String),
}

pub const KEYS: [&str; 20] = [
    "sigma_ab",
    "w",
    "sigma_s",
    "b",
    "phibar",
    "tau",
    "coverage_floor",
    "match_threshold",
    "stride",
    "mode",
    "affine_warmup",
    "simplex.reflection",
    "simplex.expansion",
    "simplex.contraction",
    "simplex.shrink",
    "simplex.max_iters",
    "simplex.f_tol",
    "simplex.x_tol",
    "simplex.restarts",
    "simplex.record_trace",
];

/// Parses `text` on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<MatchConfig, ConfigError> {
    let mut cfg = MatchConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
        let bad = || ConfigError::BadValue {
            line,
            key: key.into(),
            value: value.into(),
        };
        let real = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        let count = || value.parse::<usize>().map_err(|_| bad());
        let flag = || value.parse::<bool>().map_err(|_| bad());
        match key {
            "sigma_ab" => cfg.hyper.sigma_ab = real()?,
            "w" => cfg.hyper.w_num = real()?,
            "sigma_s" => cfg.hyper.sigma_s = real()?,
            "b" => cfg.hyper.b = real()?,
            "phibar" => cfg.hyper.phibar = real()?,
            "tau" => cfg.hyper.tau = real()?,
            "coverage_floor" => cfg.coverage_floor = real()?,
            "match_threshold" => cfg.match_threshold = real()?,
            "stride" => cfg.stride = count()?,
            "mode" => cfg.mode = value.parse::<PosteriorMode>().map_err(|_| bad())?,
            "affine_warmup" => cfg.affine_warmup = flag()?,
            "simplex.reflection" => cfg.simplex.reflection = real()?,
            "simplex.expansion" => cfg.simplex.expansion = real()?,
            "simplex.contraction" => cfg.simplex.contraction = real()?,
            "simplex.shrink" => cfg.simplex.shrink = real()?,
            "simplex.max_iters" => cfg.simplex.max_iters = count()?,
            "simplex.f_tol" => cfg.simplex.f_tol = real()?,
            "simplex.x_tol" => cfg.simplex.x_tol = real()?,
            "simplex.restarts" => cfg.simplex.restarts = count()?,
            "simplex.record_trace" => cfg.simplex.record_trace = flag()?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<MatchConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn validate(cfg: &MatchConfig) -> Result<(), ConfigError> {
    cfg.hyper.validate()?;
    cfg.simplex
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if !(0.0..=1.0).contains(&cfg.coverage_floor) {
        return Err(ConfigError::Invalid(format!(
            "coverage_floor {} outside [0, 1]",
            cfg.coverage_floor
        )));
    }
    if !(cfg.match_threshold >= 0.0) {
        return Err(ConfigError::Invalid(
            "match_threshold must be non-negative".into(),
        ));
    }
    if cfg.stride == 0 {
        return Err(ConfigError::Invalid("stride must be at least 1".into()));
    }
    Ok(())
}
