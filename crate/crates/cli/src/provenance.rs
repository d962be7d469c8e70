//! Provenance records: command, seed, input digests and parameters. No
//! timestamps, so reruns with the same inputs produce identical files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use portal_synth::stage1::ItemFailure;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, InputDigest>,
    pub parameters: BTreeMap<String, Value>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: impl Into<String>, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(
            role.into(),
            InputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("parameter serializes");
        self.parameters.insert(key.to_string(), value);
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }

    /// JSON Lines outputs keep one record per line, so their provenance goes
    /// to `<out>.provenance.json`.
    pub fn write_sidecar(&self, out: &Path) -> Result<()> {
        write_json(&with_suffix(out, ".provenance.json"), &self.to_value())
    }
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `<out>.failures.json` and echoes each failure to stderr. Removes a
/// stale report when there are no failures.
pub fn report_failures(out: &Path, failures: &[ItemFailure]) -> Result<()> {
    let path = with_suffix(out, ".failures.json");
    if failures.is_empty() {
        if path.exists() {
            std::fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
        return Ok(());
    }
    let rows: Vec<Value> = failures
        .iter()
        .map(|f| {
            eprintln!("failed item {} ({}): {}", f.index, f.id, f.error);
            serde_json::json!({ "index": f.index, "id": f.id, "error": f.error })
        })
        .collect();
    write_json(&path, &rows)
}
