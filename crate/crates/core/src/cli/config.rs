//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! profile = desk
//! market_sizes = 10, 50, 100
//! leverages = 0.1, 0.5, 1, 1.5, 2
//! regimes = both
//! master_seed = 7
//! ```
//!
//! Every key is also accepted as a command-line override with dashes in
//! place of underscores (`--sigma-base-high 0.5`).

use std::fmt::Write as _;

use thiserror::Error;

use crate::corrmat::{NoiseBand, Regime};
use crate::harness::{ExperimentConfig, Profile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{}key '{key}': {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            line: None,
            message: message.into(),
        }
    }
}

/// Keys in the order they are written by [`render`].
pub const KEYS: [&str; 19] = [
    "market_sizes",
    "leverages",
    "reps",
    "regimes",
    "loading_mode",
    "divergence_level",
    "mu",
    "sigma_base_high",
    "sigma_base_low",
    "horizon",
    "master_seed",
    "high_rho_min",
    "high_rho_max",
    "low_rho_min",
    "low_rho_max",
    "noise_fraction",
    "random_signs",
    "firm_aggregation",
    "profile",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| ConfigError::new(key, format!("cannot parse '{}': {e}", value.trim())))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse(key, t))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(ConfigError::new(key, format!("expected true or false, got '{other}'"))),
    }
}

pub fn parse_regimes(key: &str, value: &str) -> Result<Vec<Regime>, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "both" => Ok(vec![Regime::High, Regime::Low]),
        _ => parse_list(key, value),
    }
}

fn set_band(
    cfg: &mut ExperimentConfig,
    key: &str,
    regime: Regime,
    min: Option<f64>,
    max: Option<f64>,
) -> Result<(), ConfigError> {
    let old = cfg.band(regime);
    let band = NoiseBand::new(min.unwrap_or(old.rho_min()), max.unwrap_or(old.rho_max()), regime)
        .map_err(|e| ConfigError::new(key, e.to_string()))?;
    match regime {
        Regime::High => cfg.band_high = band,
        Regime::Low => cfg.band_low = band,
    }
    Ok(())
}

/// Apply one setting. `profile` resets every other field to the profile's
/// defaults, so it should come first.
pub fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    let key = key.trim();
    match key {
        "market_sizes" => cfg.market_sizes = parse_list(key, value)?,
        "leverages" => cfg.leverages = parse_list(key, value)?,
        "reps" => cfg.reps = parse(key, value)?,
        "regimes" => cfg.regimes = parse_regimes(key, value)?,
        "loading_mode" => cfg.loading_mode = parse(key, value)?,
        "divergence_level" => cfg.divergence_level = parse(key, value)?,
        "mu" => cfg.mu = parse(key, value)?,
        "sigma_base_high" => cfg.sigma_base_high = parse(key, value)?,
        "sigma_base_low" => cfg.sigma_base_low = parse(key, value)?,
        "horizon" => cfg.horizon = parse(key, value)?,
        "master_seed" | "seed" => cfg.master_seed = parse(key, value)?,
        "high_rho_min" => set_band(cfg, key, Regime::High, Some(parse(key, value)?), None)?,
        "high_rho_max" => set_band(cfg, key, Regime::High, None, Some(parse(key, value)?))?,
        "low_rho_min" => set_band(cfg, key, Regime::Low, Some(parse(key, value)?), None)?,
        "low_rho_max" => set_band(cfg, key, Regime::Low, None, Some(parse(key, value)?))?,
        "noise_fraction" => cfg.noise_fraction = parse(key, value)?,
        "random_signs" => cfg.random_signs = parse_bool(key, value)?,
        "firm_aggregation" => cfg.firm_aggregation = parse(key, value)?,
        "profile" => {
            let p: Profile = parse(key, value)?;
            *cfg = ExperimentConfig::profile(p);
        }
        _ => return Err(ConfigError::new(key, "unknown key")),
    }
    Ok(())
}

/// Split a line into key and value; `None` for blanks and comments.
pub fn split_line(line: &str) -> Option<Result<(&str, &str), String>> {
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return None;
    }
    Some(match content.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(format!("expected 'key = value', got '{content}'")),
    })
}

/// Parse a whole file on top of `base`. A `profile` line, wherever it
/// appears, is applied before every other key.
pub fn parse_config(text: &str, base: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match split_line(line) {
            None => {}
            Some(Ok((k, v))) => entries.push((idx + 1, k, v)),
            Some(Err(message)) => {
                return Err(ConfigError {
                    key: line.trim().to_string(),
                    line: Some(idx + 1),
                    message,
                })
            }
        }
    }
    let mut cfg = base;
    apply_all(&mut cfg, &entries)?;
    Ok(cfg)
}

const BAND_KEYS: [&str; 4] = ["high_rho_min", "high_rho_max", "low_rho_min", "low_rho_max"];

/// Apply `(line, key, value)` settings: `profile` first, band edges of each
/// regime together at the end (so a band may move past its old edges), and
/// everything else in order.
pub fn apply_all(cfg: &mut ExperimentConfig, entries: &[(usize, &str, &str)]) -> Result<(), ConfigError> {
    let with_line = |line: usize| {
        move |e: ConfigError| ConfigError {
            line: (line > 0).then_some(line),
            ..e
        }
    };
    let mut ordered: Vec<&(usize, &str, &str)> = entries.iter().collect();
    ordered.sort_by_key(|(_, k, _)| *k != "profile");
    let mut edges: [Option<(usize, f64)>; 4] = [None; 4];
    for &&(line, k, v) in &ordered {
        if let Some(slot) = BAND_KEYS.iter().position(|b| *b == k) {
            edges[slot] = Some((line, parse(k, v).map_err(with_line(line))?));
        } else {
            apply_key(cfg, k, v).map_err(with_line(line))?;
        }
    }
    for (regime, lo, hi) in [(Regime::High, 0, 1), (Regime::Low, 2, 3)] {
        if edges[lo].is_none() && edges[hi].is_none() {
            continue;
        }
        let line = edges[lo].or(edges[hi]).map(|e| e.0).unwrap_or(0);
        let key = if edges[lo].is_some() {
            BAND_KEYS[lo]
        } else {
            BAND_KEYS[hi]
        };
        set_band(cfg, key, regime, edges[lo].map(|e| e.1), edges[hi].map(|e| e.1)).map_err(with_line(line))?;
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Every field as `(key, value)`; floats use shortest round-trip notation.
pub fn entries(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    vec![
        ("market_sizes", join(&cfg.market_sizes)),
        ("leverages", join(&cfg.leverages)),
        ("reps", cfg.reps.to_string()),
        ("regimes", join(&cfg.regimes)),
        ("loading_mode", cfg.loading_mode.to_string()),
        ("divergence_level", cfg.divergence_level.to_string()),
        ("mu", cfg.mu.to_string()),
        ("sigma_base_high", cfg.sigma_base_high.to_string()),
        ("sigma_base_low", cfg.sigma_base_low.to_string()),
        ("horizon", cfg.horizon.to_string()),
        ("master_seed", cfg.master_seed.to_string()),
        ("high_rho_min", cfg.band_high.rho_min().to_string()),
        ("high_rho_max", cfg.band_high.rho_max().to_string()),
        ("low_rho_min", cfg.band_low.rho_min().to_string()),
        ("low_rho_max", cfg.band_low.rho_max().to_string()),
        ("noise_fraction", cfg.noise_fraction.to_string()),
        ("random_signs", cfg.random_signs.to_string()),
        ("firm_aggregation", cfg.firm_aggregation.to_string()),
    ]
}

/// A complete config file that parses back to `cfg`.
pub fn render(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for (k, v) in entries(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LoadingMode;

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::paper();
        cfg.master_seed = u64::MAX;
        cfg.leverages = vec![0.1, 0.30000000000000004, 2.0];
        cfg.loading_mode = LoadingMode::Cholesky;
        cfg.band_low = NoiseBand::new(0.2, 0.2, Regime::Low).unwrap();
        let back = parse_config(&render(&cfg), ExperimentConfig::desk()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_profile_and_errors() {
        let text = "reps = 7 # trailing\n\n# full line\nprofile = paper\nregimes = low\n";
        let cfg = parse_config(text, ExperimentConfig::desk()).unwrap();
        assert_eq!(cfg.reps, 7);
        assert_eq!(cfg.market_sizes, ExperimentConfig::paper().market_sizes);
        assert_eq!(cfg.regimes, vec![Regime::Low]);

        let e = parse_config("reps = 5\nsigma_base_hgh = 1\n", ExperimentConfig::desk()).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("sigma_base_hgh", Some(2)));
        assert!(e.to_string().contains("sigma_base_hgh"));
        let e = parse_config("reps = many\n", ExperimentConfig::desk()).unwrap_err();
        assert_eq!(e.key, "reps");
        assert!(parse_config("just words\n", ExperimentConfig::desk()).is_err());
        assert!(parse_config("high_rho_min = 0.995\n", ExperimentConfig::desk()).is_err());
        let moved = parse_config("high_rho_min = 0.995\nhigh_rho_max = 0.999\n", ExperimentConfig::desk()).unwrap();
        assert_eq!((moved.band_high.rho_min(), moved.band_high.rho_max()), (0.995, 0.999));
    }
}
