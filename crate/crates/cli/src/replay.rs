//! `lendfee replay`: ingest a log, run the sliding-window evaluation, emit
//! reports. Settings come from an optional TOML file; flags override it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use lendfee_core::data::{ingest, SchemaConfig};
use lendfee_core::domain::BenchmarkMode;
use lendfee_core::policies::PolicySpec;
use lendfee_core::replay::{sliding_windows_with_states, ReplayConfig, ReplayMode};
use serde::{Deserialize, Serialize};

use crate::manifest::{config_digest, sha256_file, sha256_hex, RunManifest};
use crate::{render, snapshot, Failure, WithCode};

const EXIT_INGEST: u8 = 2;
const EXIT_REPLAY: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Args)]
pub struct ReplayArgs {
    /// Transaction log (CSV)
    #[arg(long)]
    pub log: PathBuf,

    /// Settings file (TOML, `[replay]` and `[schema]` tables)
    #[arg(long, env = "LENDFEE_REPLAY_CONFIG")]
    pub config: Option<PathBuf>,

    /// Feedback gate: full | replay-match
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ReplayMode>,

    /// Generator seed for policy randomness
    #[arg(long)]
    pub seed: Option<u64>,

    /// Anti-spoofing threshold factor on the benchmark fee
    #[arg(long)]
    pub delta: Option<f64>,

    /// Spoof benchmark: market-vwaf | fixed:<fee>
    #[arg(long, value_parser = parse_benchmark)]
    pub benchmark: Option<BenchmarkArg>,

    /// Stop policy updates inside the test segment
    #[arg(long)]
    pub freeze_test: bool,

    /// Fold the rule arm into the ML arm in ratio outputs
    #[arg(long)]
    pub merge_rule_into_ml: bool,

    /// Comma-separated policy roster (e.g. linucb,lrts,own-vwaf)
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,

    /// Training days per window
    #[arg(long)]
    pub train_days: Option<u32>,

    /// Test days per window
    #[arg(long)]
    pub test_days: Option<u32>,

    /// Worker threads for window/policy parallelism (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,

    /// Warm-start policies from a snapshot file
    #[arg(long)]
    pub warm_start: Option<PathBuf>,

    /// Write end-of-run policy states to a snapshot file
    #[arg(long)]
    pub save_state: Option<PathBuf>,

    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkArg {
    mode: BenchmarkMode,
    fixed: Option<f64>,
}

fn parse_mode(s: &str) -> Result<ReplayMode, String> {
    match s {
        "full" | "full-feedback" => Ok(ReplayMode::FullFeedback),
        "replay-match" => Ok(ReplayMode::ReplayMatch),
        other => Err(format!(
            "unknown mode {other:?}, expected full | replay-match"
        )),
    }
}

fn parse_benchmark(s: &str) -> Result<BenchmarkArg, String> {
    if s == "market-vwaf" {
        return Ok(BenchmarkArg {
            mode: BenchmarkMode::MarketVwaf,
            fixed: None,
        });
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        let fee: f64 = v
            .parse()
            .map_err(|_| format!("bad fixed benchmark fee {v:?}"))?;
        return Ok(BenchmarkArg {
            mode: BenchmarkMode::FixedValue,
            fixed: Some(fee),
        });
    }
    Err(format!(
        "unknown benchmark {s:?}, expected market-vwaf | fixed:<fee>"
    ))
}

/// On-disk settings shape.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    replay: ReplayConfig,
    schema: SchemaConfig,
}

fn effective_config(args: &ReplayArgs) -> Result<FileConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .with_code(EXIT_IO)?;
            toml::from_str::<FileConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .with_code(EXIT_REPLAY)?
        }
        None => FileConfig::default(),
    };

    if let Some(mode) = args.mode {
        cfg.replay.mode = mode;
    }
    if let Some(seed) = args.seed {
        cfg.replay.seed = seed;
    }
    if let Some(delta) = args.delta {
        cfg.replay.spoof.delta = delta;
    }
    if let Some(benchmark) = args.benchmark {
        cfg.replay.spoof.benchmark_mode = benchmark.mode;
        cfg.replay.spoof.fixed_value = benchmark.fixed;
    }
    if args.freeze_test {
        cfg.replay.freeze_test = true;
    }
    if let Some(days) = args.train_days {
        cfg.replay.train_days = days;
    }
    if let Some(days) = args.test_days {
        cfg.replay.test_days = days;
    }
    if let Some(names) = &args.policies {
        cfg.replay.policies = names
            .iter()
            .map(|name| {
                PolicySpec::from_name(name).ok_or_else(|| anyhow!("unknown policy {name:?}"))
            })
            .collect::<Result<_, _>>()
            .with_code(EXIT_REPLAY)?;
    }
    Ok(cfg)
}

pub fn run(args: ReplayArgs) -> Result<(), Failure> {
    let cfg = effective_config(&args)?;
    let warm = match &args.warm_start {
        Some(path) => Some(snapshot::load(path).with_code(EXIT_REPLAY)?),
        None => None,
    };

    let ingested = ingest(&args.log, &cfg.schema)
        .with_context(|| format!("ingesting {}", args.log.display()))
        .with_code(EXIT_INGEST)?;

    let run_replay = || sliding_windows_with_states(&ingested.events, &cfg.replay, warm.as_ref());
    let (report, states) = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")
            .with_code(EXIT_REPLAY)?
            .install(run_replay),
        None => run_replay(),
    }
    .with_code(EXIT_REPLAY)?;

    let jsonl = render::reports_jsonl(&report);
    let revenue = render::revenue_csv(&report);
    let ratios = render::ratios_csv(&report, args.merge_rule_into_ml);

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .with_code(EXIT_IO)?;
    let mut outputs = BTreeMap::new();
    for (name, content) in [
        ("reports.jsonl", &jsonl),
        ("revenue.csv", &revenue),
        ("ratios.csv", &ratios),
    ] {
        let path = args.out.join(name);
        std::fs::write(&path, content)
            .with_context(|| format!("writing {}", path.display()))
            .with_code(EXIT_IO)?;
        outputs.insert(name.to_string(), sha256_hex(content.as_bytes()));
    }
    if let Some(path) = &args.save_state {
        snapshot::save(path, &states).with_code(EXIT_IO)?;
    }

    let horizon = ingested
        .events
        .iter()
        .map(|e| e.request.timestamp_ms)
        .max()
        .unwrap_or(0);
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.replay.seed,
        config_sha256: config_digest(&cfg),
        input_sha256: Some(sha256_file(&args.log).with_code(EXIT_IO)?),
        outputs_sha256: outputs,
        timestamp_ms: horizon,
    };
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .with_context(|| format!("writing {}", args.out.join("manifest.json").display()))
    .with_code(EXIT_IO)?;

    println!(
        "replayed {} events over {} window(s); {} rejected rows, {} GC-filtered",
        ingested.summary.events,
        report.windows.len(),
        ingested.summary.rejected_rows,
        ingested.summary.gc_filtered
    );
    println!();
    print!(
        "{}",
        render::human_summary(&report, args.merge_rule_into_ml)
    );
    Ok(())
}
