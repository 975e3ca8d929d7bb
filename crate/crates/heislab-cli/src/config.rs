//! Plain key=value experiment configuration with validation and hashing.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "heislab-config-1";

#[derive(Debug, Serialize)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Key=value file (# comments, blank lines ignored) plus overrides, with
/// typed accessors. All accessed keys are echoed into the result envelope,
/// so a run's effective configuration is always fully recorded.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    used: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                field: "config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| ConfigError {
                    field: format!("line {}", lineno + 1),
                    message: format!("expected key=value, got `{line}`"),
                })?;
                values.insert(k.trim().to_string(), v.trim().to_string());
            }
            if let Some(v) = values.get("schema") {
                if v != SCHEMA_VERSION {
                    return Err(ConfigError {
                        field: "schema".into(),
                        message: format!("expected {SCHEMA_VERSION}, got {v}"),
                    });
                }
            }
        }
        Ok(Self {
            values,
            used: Default::default(),
        })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    fn raw(&self, key: &str, default: &str) -> String {
        let v = self
            .values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.used.borrow_mut().insert(key.to_string(), v.clone());
        v
    }

    pub fn str(&self, key: &str, default: &str) -> String {
        self.raw(key, default)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.raw(key, &default.to_string())
            .parse()
            .map_err(|e| ConfigError {
                field: key.into(),
                message: format!("not a number: {e}"),
            })
    }

    pub fn i64(&self, key: &str, default: i64) -> Result<i64, ConfigError> {
        self.raw(key, &default.to_string())
            .parse()
            .map_err(|e| ConfigError {
                field: key.into(),
                message: format!("not an integer: {e}"),
            })
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.raw(key, &default.to_string())
            .parse()
            .map_err(|e| ConfigError {
                field: key.into(),
                message: format!("not an unsigned integer: {e}"),
            })
    }

    /// "1..4" or "1,2,5" or "3"
    pub fn int_list(&self, key: &str, default: &str) -> Result<Vec<i64>, ConfigError> {
        let raw = self.raw(key, default);
        let bad = |m: String| ConfigError {
            field: key.into(),
            message: m,
        };
        if let Some((a, b)) = raw.split_once("..") {
            let a: i64 = a.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let b: i64 = b.trim().parse().map_err(|e| bad(format!("{e}")))?;
            if b < a {
                return Err(bad(format!("empty range {raw}")));
            }
            return Ok((a..=b).collect());
        }
        raw.split(',')
            .map(|s| s.trim().parse().map_err(|e| bad(format!("{e}"))))
            .collect()
    }

    /// Everything read so far (defaults included), for the envelope echo.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }

    /// Hash of the effective configuration (sorted key=value lines).
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(SCHEMA_VERSION.as_bytes());
        for (k, v) in self.used.borrow().iter() {
            hasher.update(b"\n");
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
        }
        format!("{:x}", hasher.finalize())
    }
}
