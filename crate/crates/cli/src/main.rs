//! `nsse` command-line driver.
//!
//! Exit status: 0 when every enabled check passes, 1 when some check fails
//! (the failure list goes to stderr and into the summary), 2 on
//! configuration or runtime errors.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Resolved;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Run(#[from] nsse::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "nsse", version, about = "Stochastic Schrödinger equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for `summary.json` and trajectory CSVs. Without it the
    /// summary goes to stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble and summarize observables over time.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write one CSV per trajectory into the output directory.
        #[arg(long)]
        traj_csv: bool,
    },
    /// Compare direct, weighted-linear and master-equation estimates.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate moment-bound criteria for an oscillator model.
    Criteria {
        #[command(flatten)]
        common: Common,
        /// Fail when a predicate is false.
        #[arg(long)]
        enforce: bool,
    },
    /// Compare the stationary density matrix with long-time averages.
    Steady {
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &PathBuf) -> Result<Resolved, CliError> {
    let src = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Resolved::parse(&src)
}

fn execute(cli: Cli) -> Result<run::Summary, CliError> {
    match cli.command {
        Command::Simulate { common, traj_csv } => {
            if traj_csv && common.out.is_none() {
                return Err(CliError::Usage("--traj-csv needs --out".into()));
            }
            let cfg = load(&common.config)?;
            let (summary, ensemble) = run::simulate(&cfg)?;
            if let (true, Some(dir)) = (traj_csv, &common.out) {
                output::write_trajectories(dir, &ensemble)?;
            }
            output::emit(&summary, common.out.as_deref())?;
            Ok(summary)
        }
        Command::Compare { common } => finish(run::compare(&load(&common.config)?)?, &common),
        Command::Criteria { common, enforce } => finish(run::criteria(&load(&common.config)?, enforce)?, &common),
        Command::Steady { common } => finish(run::steady(&load(&common.config)?)?, &common),
    }
}

fn finish(summary: run::Summary, common: &Common) -> Result<run::Summary, CliError> {
    output::emit(&summary, common.out.as_deref())?;
    Ok(summary)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) if summary.passed() => ExitCode::SUCCESS,
        Ok(summary) => {
            for c in summary.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {}: {}", c.name, c.detail);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
