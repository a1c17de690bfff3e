//! `qbld`: simulate, fit, summarize and compute covariate effects for
//! quantile regression on binary panel data.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::required;
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "qbld", version, about = "Bayesian quantile regression for binary longitudinal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from the configured design.
    Simulate,
    /// Run the Gibbs sampler on a panel CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Recompute diagnostics from a fit directory.
    Summarize {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Average covariate effects from a fit directory.
    Effects {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        effects: PathBuf,
    },
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate => commands::simulate(required("config", &cli.config)?, required("out", &cli.out)?, cli.seed),
        Command::Fit { data } => {
            commands::fit(required("config", &cli.config)?, data, required("out", &cli.out)?, cli.seed)
        }
        Command::Summarize { draws, batch_size } => commands::summarize_cmd(draws, cli.out.as_deref(), *batch_size),
        Command::Effects { draws, data, effects } => {
            commands::effects(required("config", &cli.config)?, draws, data, effects, cli.out.as_deref(), cli.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qbld: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
