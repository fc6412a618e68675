//! The `vloc` command line: ingest, simulate, analyze, report.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 ingest
//! failure, 3 simulation failure, 4 analysis or report failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{analyze, ingest, report, simulate, IngestSummary};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("ingest failed: {0}")]
    Ingest(String),
    #[error("simulation failed: {0}")]
    Simulate(String),
    #[error("analysis failed: {0}")]
    Analyze(String),
    #[error("report failed: {0}")]
    Report(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Ingest(_) => 2,
            Self::Simulate(_) => 3,
            Self::Analyze(_) | Self::Report(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vloc", version, about = "Pedestrian movement and virtual-location overlap toolkit")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the file)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build the places table and dataset statistics
    Ingest,
    /// Sample movements, route them and write paths
    Simulate,
    /// Coverage, occupancy and visit-overlap tables
    Analyze,
    /// Collect manifests and tables into one summary
    Report,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let ov = Overrides {
        seed: cli.seed,
        output: cli.out.clone(),
        threads: cli.threads,
    };
    let result = RunConfig::load(cli.config.as_deref(), &ov).and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Ingest => {
            let s = ingest(cfg)?;
            println!("{}", s.table());
        }
        Command::Simulate => {
            let files = simulate(cfg)?;
            println!("wrote {}", files.join(", "));
        }
        Command::Analyze => {
            let files = analyze(cfg)?;
            println!("wrote {}", files.join(", "));
        }
        Command::Report => {
            let path = report(cfg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
