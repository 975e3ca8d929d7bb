//! Result envelopes and atomic file emission.

use crate::config::{Config, SCHEMA_VERSION};
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ResultEnvelope {
    pub schema: &'static str,
    pub artifact_version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub config_sha256: String,
    pub wall_clock_s: f64,
    pub payload: Value,
    pub checks: Vec<Check>,
}

impl ResultEnvelope {
    pub fn new(command: &str, config: &Config, payload: Value, checks: Vec<Check>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION,
            command: command.to_string(),
            config: config.echo(),
            config_sha256: config.sha256(),
            wall_clock_s: 0.0,
            payload,
            checks,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Write bytes to `dir/name` atomically (temp file + rename).
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    let path = dir.join(name);
    tmp.persist(&path)?;
    Ok(path)
}

/// CSV with a `# schema=...` / `# config_sha256=...` header block.
pub fn write_csv(
    dir: &Path,
    name: &str,
    config: &Config,
    columns: &str,
    rows: &[String],
) -> anyhow::Result<PathBuf> {
    let mut out = String::new();
    out.push_str(&format!("# schema={SCHEMA_VERSION}\n"));
    out.push_str(&format!("# config_sha256={}\n", config.sha256()));
    out.push_str(columns);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    write_atomic(dir, name, out.as_bytes())
}

pub fn write_envelope(dir: &Path, name: &str, env: &ResultEnvelope) -> anyhow::Result<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(env)?;
    bytes.push(b'\n');
    write_atomic(dir, name, &bytes)
}
