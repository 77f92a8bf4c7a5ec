//! `crowdvote`: simulate, aggregate, verify and report from the command line.

mod aggregate;
mod config;
mod error;
mod report;
mod simulate;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "crowdvote",
    version,
    about = "Aggregate categorical answers from heterogeneous agents"
)]
struct Cli {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated predictions CSV with a truth column.
    Simulate(simulate::Args),
    /// Aggregate a predictions CSV into one label per question.
    Aggregate(aggregate::Args),
    /// Check the aggregation rules against the brute-force oracle.
    Verify(verify::Args),
    /// Produce the accuracy table and/or the ISP-MV gap curve.
    Report(report::Args),
}

fn run(cli: Cli) -> CliResult<()> {
    let file = config::load(cli.config.as_deref())?;
    let threads = cli.threads.or_else(|| {
        file.get("threads")
            .and_then(|t| t.as_u64())
            .map(|t| t as usize)
    });
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(config::resolve(&file, "simulate", cli.seed, &a)?),
        Command::Aggregate(a) => aggregate::run(config::resolve(&file, "aggregate", cli.seed, &a)?),
        Command::Verify(a) => verify::run(config::resolve(&file, "verify", cli.seed, &a)?),
        Command::Report(a) => report::run(config::resolve(&file, "report", cli.seed, &a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crowdvote: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
