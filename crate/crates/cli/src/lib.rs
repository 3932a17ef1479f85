//! Command-line harness for running annealing experiments.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;
use crate::experiment::Summary;

#[derive(Debug, Parser)]
#[command(name = "oda", version, about = "Online deterministic annealing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unsupervised clustering of a dataset.
    Cluster(RunArgs),
    /// Prototype classification with a held-out split.
    Classify(RunArgs),
    /// Q-learning on cart-pole with an adaptive or grid aggregation.
    RlCartpole(RunArgs),
    /// Run ODA, k-means, online VQ and batch DA on the same data.
    CompareBaselines(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML experiment file. Optional for rl-cartpole.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to runs/<mode>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn mode(&self) -> Mode {
        match self {
            Command::Cluster(_) => Mode::Cluster,
            Command::Classify(_) => Mode::Classify,
            Command::RlCartpole(_) => Mode::RlCartpole,
            Command::CompareBaselines(_) => Mode::CompareBaselines,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Cluster(a)
            | Command::Classify(a)
            | Command::RlCartpole(a)
            | Command::CompareBaselines(a) => a,
        }
    }
}

/// Loads the config, runs the experiment and returns its summary.
pub fn execute(command: &Command) -> Result<Summary, CliError> {
    let mode = command.mode();
    let args = command.args();
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if mode == Mode::RlCartpole => ExperimentConfig::default(),
        None => return Err(CliError::Config(format!("{} needs --config", mode.name()))),
    };
    let seed = config.resolve_seed(args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| experiment::default_out(mode));
    experiment::run_experiment(mode, &config, seed, &out)
}

/// Process exit code for a parsed command line: 0 on success, 2 for
/// configuration or input errors, 3 for numerical failures.
pub fn run(cli: &Cli) -> i32 {
    match execute(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
