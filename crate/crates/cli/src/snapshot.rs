//! Versioned policy-state snapshots for warm-starting a later run.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context};
use lendfee_core::policies::PolicyState;
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub version: u32,
    /// End-of-run state per policy name.
    pub states: HashMap<String, PolicyState>,
}

pub fn save(path: &Path, states: &HashMap<String, PolicyState>) -> anyhow::Result<()> {
    let file = SnapshotFile {
        version: SNAPSHOT_VERSION,
        states: states.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json).with_context(|| format!("writing snapshot {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> anyhow::Result<HashMap<String, PolicyState>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading snapshot {}", path.display()))?;
    let file: SnapshotFile = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing snapshot {}", path.display()))?;
    if file.version != SNAPSHOT_VERSION {
        bail!(
            "snapshot {} has version {}, expected {SNAPSHOT_VERSION}",
            path.display(),
            file.version
        );
    }
    Ok(file.states)
}
