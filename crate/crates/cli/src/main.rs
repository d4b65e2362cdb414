//! `spi`: run structured policy iteration experiments from a config file and
//! write CSV results.

mod commands;
mod config;
mod error;
mod matrix_io;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Command;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spi", version, about = "Structured policy iteration for regularized LQR")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum CliCommand {
    /// Solve one regularized problem and write the iteration trace.
    Solve,
    /// Solve on a grid of regularization weights starting from the Riccati gain.
    SweepLambda,
    /// Largest stable fixed stepsize for each regularization weight.
    StepsizeDependency,
    /// Fixed-stepsize run compared against the linesearch solution.
    FixedStepTrace,
    /// Wall time on the Laplacian family as the state dimension grows.
    Scalability,
    /// Model-free proximal gradient with smoothed zeroth-order gradients.
    ModelFree,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Solve => Command::Solve,
            CliCommand::SweepLambda => Command::SweepLambda,
            CliCommand::StepsizeDependency => Command::StepsizeDependency,
            CliCommand::FixedStepTrace => Command::FixedStepTrace,
            CliCommand::Scalability => Command::Scalability,
            CliCommand::ModelFree => Command::ModelFree,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse("", &std::env::current_dir().unwrap_or_default())?,
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = load_config(&cli).and_then(|config| commands::run(cli.command.into(), &config));
    match outcome {
        Ok(paths) => {
            for path in paths {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("spi: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
