//! Run manifests: enough provenance to tell two runs apart, and no more.
//! The timestamp is the data horizon (latest event in the run), not wall
//! clock, so reruns of the same inputs produce identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub seed: u64,
    /// Digest of the effective (post-override) run configuration.
    pub config_sha256: String,
    /// Digest of the input log file bytes; absent for generation runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    /// Digest per emitted file, keyed by file name.
    pub outputs_sha256: BTreeMap<String, String>,
    /// Latest event timestamp covered by the run, epoch milliseconds.
    pub timestamp_ms: i64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Digest of any serializable config, via its canonical JSON form. Two
/// configs hash equal exactly when their effective contents are equal,
/// regardless of source formatting.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}
