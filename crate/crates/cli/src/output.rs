use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use entangle_core::ProtocolParams;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record written next to every data file as
/// `<file>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params_hash: String,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, params: &ProtocolParams, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            params_hash: params_hash(params),
            seed,
            tool_version: TOOL_VERSION,
            timestamp: timestamp(),
        }
    }
}

/// SHA-256 of the canonical `key = value` rendering of the parameters.
pub fn params_hash(params: &ProtocolParams) -> String {
    Sha256::digest(params.to_config_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// ISO-8601 UTC time, taken from `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub struct Writer {
    dir: PathBuf,
}

impl Writer {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
        })
    }

    /// Write `name` and its manifest sidecar; returns the data file path.
    pub fn write(&self, name: &str, contents: &str, manifest: &RunManifest) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        let sidecar = self.dir.join(format!("{name}.manifest.json"));
        let mut json = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        json.push('\n');
        fs::write(sidecar, json)?;
        Ok(path)
    }
}
