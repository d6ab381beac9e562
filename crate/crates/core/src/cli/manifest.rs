//! Run manifest: a flat `key = value` record written next to the CSVs.
//!
//! `config.*` keys hold a complete configuration, so a manifest can be fed
//! back to `run --from-manifest` to reproduce the same files, whose SHA-256
//! digests are listed under `digest.*`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{apply_all, entries, split_line, ConfigError};
use crate::harness::{CalibrationGap, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub elapsed_seconds: f64,
    pub workers: usize,
    /// `(component, version)`.
    pub components: Vec<(String, String)>,
    /// `(file name, hex SHA-256)`.
    pub digests: Vec<(String, String)>,
    pub clamp_events: u64,
    pub calibration: Vec<CalibrationGap>,
}

/// Library modules recorded in every manifest.
pub fn components() -> Vec<(String, String)> {
    let v = env!("CARGO_PKG_VERSION");
    ["corrmat", "dynamics", "divergence", "stats", "harness", "cli"]
        .iter()
        .map(|m| (m.to_string(), v.to_string()))
        .collect()
}

pub fn sha256_hex<R: Read>(mut r: R) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let k = r.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    sha256_hex(std::fs::File::open(path)?)
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# credit-divergence run manifest");
        let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(s, "master_seed = {}", self.config.master_seed);
        let _ = writeln!(s, "started_unix = {}", self.started_unix);
        let _ = writeln!(s, "finished_unix = {}", self.finished_unix);
        let _ = writeln!(s, "elapsed_seconds = {:.3}", self.elapsed_seconds);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "clamp_events = {}", self.clamp_events);
        for (k, v) in &self.components {
            let _ = writeln!(s, "component.{k} = {v}");
        }
        for (k, v) in entries(&self.config) {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        for (k, v) in &self.digests {
            let _ = writeln!(s, "digest.{k} = {v}");
        }
        if !self.calibration.is_empty() {
            let _ = writeln!(s, "# achieved mean, reference mean, (achieved - reference) / reference");
        }
        for g in &self.calibration {
            let _ = writeln!(
                s,
                "calibration.n{}.lev{}.{} = {:.6} {:.4} {:+.4}",
                g.n, g.leverage, g.regime, g.achieved, g.reference, g.relative_gap
            );
        }
        s
    }
}

/// The reproducible part of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedManifest {
    pub config: ExperimentConfig,
    pub digests: BTreeMap<String, String>,
}

pub fn parse_manifest(text: &str) -> Result<ParsedManifest, ConfigError> {
    let mut cfg_entries = Vec::new();
    let mut digests = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        match split_line(line) {
            None => {}
            Some(Err(message)) => {
                return Err(ConfigError {
                    key: line.trim().to_string(),
                    line: Some(idx + 1),
                    message,
                })
            }
            Some(Ok((k, v))) => {
                if let Some(key) = k.strip_prefix("config.") {
                    cfg_entries.push((idx + 1, key, v));
                } else if let Some(file) = k.strip_prefix("digest.") {
                    digests.insert(file.to_string(), v.to_string());
                }
            }
        }
    }
    if cfg_entries.is_empty() {
        return Err(ConfigError::new("config.*", "manifest holds no configuration"));
    }
    let mut config = ExperimentConfig::desk();
    apply_all(&mut config, &cfg_entries)?;
    Ok(ParsedManifest { config, digests })
}
