//! `qpgp`: simulate, fit, predict, score and assess space-time ozone models.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod pipeline;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "qpgp", version, about = "Quasi-periodic space-time Gaussian process pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from the dense Gaussian process.
    Simulate(RunArgs),
    /// Run the NNGP sampler on the configured data.
    Fit(RunArgs),
    /// Posterior predictive summaries on a grid or target list.
    Predict(RunArgs),
    /// Hold out hours and compare the configured models.
    Score(RunArgs),
    /// Exceedance probabilities and respiratory risk on a grid.
    Assess(RunArgs),
    /// Random-design positive semidefiniteness sweep of the kernel catalog.
    ValidateKernel(RunArgs),
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&load(&a)?),
        Command::Fit(a) => commands::fit(&load(&a)?),
        Command::Predict(a) => commands::predict(&load(&a)?),
        Command::Score(a) => commands::score(&load(&a)?),
        Command::Assess(a) => commands::assess(&load(&a)?),
        Command::ValidateKernel(a) => commands::validate_kernel(&load(&a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
