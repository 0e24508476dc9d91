//! Run manifests: every run writes `manifest.json` (status `failed`) before
//! any result file exists, and rewrites it with status `ok`, timings and the
//! output list on success. The config hash is a SHA-256 of the canonical
//! (sorted-keys) JSON of the effective post-override configuration, so it is
//! stable across machines and key orderings.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use young_bsde::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct TimingEntry {
    pub op: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub command: String,
    pub config_hash: String,
    pub library_version: String,
    pub status: String,
    pub timings: Vec<TimingEntry>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub effective_config: Value,
}

impl RunManifest {
    pub fn new(command: &str, effective_config: Value) -> Self {
        RunManifest {
            schema_version: "1".to_string(),
            command: command.to_string(),
            config_hash: config_hash(&effective_config),
            library_version: young_bsde::VERSION.to_string(),
            status: "failed".to_string(),
            timings: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            effective_config,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(out_dir.join("manifest.json"), text)?;
        Ok(())
    }

    pub fn time(&mut self, op: &str, seconds: f64) {
        self.timings.push(TimingEntry {
            op: op.to_string(),
            seconds,
        });
    }
}

/// Canonical JSON: objects re-serialized with sorted keys, arrays in order,
/// numbers via their shortest representation.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).unwrap(),
                        canonical_json(&map[*k])
                    )
                })
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}

pub fn config_hash(value: &Value) -> String {
    let canonical = canonical_json(value);
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
