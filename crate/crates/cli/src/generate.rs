//! `lendfee generate`: scenario TOML in, canonical log plus manifest out.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use lendfee_core::data::{generate_synthetic, write_canonical_file, SchemaConfig, SyntheticConfig};

use crate::manifest::{config_digest, sha256_file, RunManifest};
use crate::{Failure, WithCode};

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), Failure> {
    inner(config_path, out_dir).with_code(1)
}

fn inner(config_path: &Path, out_dir: &Path) -> anyhow::Result<()> {
    if !config_path.is_file() {
        bail!("config not found: {}", config_path.display());
    }
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config: SyntheticConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", config_path.display()))?;

    let (events, summary) = generate_synthetic(&config)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let log_path = out_dir.join("log.csv");
    write_canonical_file(&events, &SchemaConfig::default(), &log_path)
        .with_context(|| format!("writing {}", log_path.display()))?;

    let horizon = events
        .iter()
        .map(|e| e.request.timestamp_ms)
        .max()
        .unwrap_or(0);
    let mut outputs = BTreeMap::new();
    outputs.insert("log.csv".to_string(), sha256_file(&log_path)?);
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config_sha256: config_digest(&config),
        input_sha256: None,
        outputs_sha256: outputs,
        timestamp_ms: horizon,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    println!(
        "wrote {} requests ({} securities, {} days, {} spoofed, {} GC) to {}",
        summary.requests,
        summary.securities,
        summary.days,
        summary.spoof_injected,
        summary.gc_securities,
        log_path.display()
    );
    Ok(())
}
