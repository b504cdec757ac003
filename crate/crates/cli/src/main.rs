//! `gapsel` — estimate dynamics similarity between a target system and a
//! bank of sources from frequency probes, select the most similar source,
//! and verify that the selection predicts transfer-learning performance.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/numerical error.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gapsel_core::bo::ProbeMode;
use gapsel_core::error::CoreError;

use config::ExperimentConfig;

/// CLI-level error with an exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or inputs (exit code 2).
    Config(String),
    /// Runtime or numerical failure (exit code 3).
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::Dimension(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProbeModeArg {
    Analytic,
    Timeseries,
}

impl From<ProbeModeArg> for ProbeMode {
    fn from(v: ProbeModeArg) -> Self {
        match v {
            ProbeModeArg::Analytic => ProbeMode::Analytic,
            ProbeModeArg::Timeseries => ProbeMode::Timeseries,
        }
    }
}

#[derive(Parser)]
#[command(name = "gapsel", version, about = "Frequency-domain dynamics-similarity estimation and source selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON). Required by sweep/select/transfer.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; overrides `selection.seed` and `transfer.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Probe realization; overrides `selection.probe.mode`.
    #[arg(long, global = true, value_enum)]
    probe_mode: Option<ProbeModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Dense analytic sweep of the chordal distance per source/target pair.
    Sweep,
    /// Run the iterative source-selection loop.
    Select,
    /// Run the transfer study against a selection artifact.
    Transfer {
        /// Selection artifact path (default: <out>/selection_result.json).
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Merge artifacts in the output directory into report.json/report.txt.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_overrides(cli.seed, cli.probe_mode.map(Into::into));
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out <dir> is required".into()))?;
    match &cli.command {
        Command::Sweep => commands::cmd_sweep(&load_config(cli)?, &out),
        Command::Select => commands::cmd_select(&load_config(cli)?, &out),
        Command::Transfer { selection } => {
            commands::cmd_transfer(&load_config(cli)?, &out, selection.clone())
        }
        Command::Report => commands::cmd_report(&out),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}
