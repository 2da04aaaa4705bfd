//! `lendfee`: generate synthetic lending logs, replay them through quoting
//! policies, and summarize log files.
//!
//! Exit codes are stable so scripts can branch on failure class:
//!
//! - `generate`: 1 on any config or write failure
//! - `replay`: 2 ingestion, 3 configuration or replay, 4 output I/O
//! - `inspect`: 2 on ingestion failure

mod generate;
mod inspect;
mod manifest;
mod render;
mod replay;
mod snapshot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "lendfee",
    version,
    about = "Securities-lending fee pricer: synthetic market generator, bandit quoting policies, offline replay evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic transaction log from a TOML scenario
    Generate {
        /// Scenario file (TOML)
        #[arg(long, env = "LENDFEE_GENERATE_CONFIG")]
        config: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay a transaction log through the policy roster
    Replay(replay::ReplayArgs),
    /// Summarize a transaction log
    Inspect {
        /// Log file to summarize
        #[arg(long)]
        log: PathBuf,
    },
}

/// An error already mapped to its exit code.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

/// Attaches an exit code to any error type.
pub trait WithCode<T> {
    fn with_code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn with_code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code, e))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, out } => generate::run(&config, &out),
        Command::Replay(args) => replay::run(args),
        Command::Inspect { log } => inspect::run(&log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
