use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use eqv::ensemble::Strategy;
use eqv_cli::commands::{run, Command};
use eqv_cli::config::{ExperimentConfig, Overrides, Task};

/// Ensemble variational quantum classifiers on simulated IBM machines.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every variant noiselessly and report test accuracy.
    Train,
    /// Single-classifier accuracy per machine for several circuit widths.
    SweepQubits,
    /// Ensemble accuracy against ensemble size for each strategy.
    SweepEnsemble,
    /// Ensemble against single machines and noiseless simulation.
    Compare,
    /// Impact-factor densities of correct and wrong predictions.
    Impact,
}

#[derive(Args)]
struct Flags {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// mnist2 or mnist4.
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Comma-separated qubit counts; the first is the classifier width.
    #[arg(long, global = true, value_delimiter = ',')]
    qubits: Option<Vec<usize>>,
    /// Comma-separated ensemble sizes.
    #[arg(long, global = true, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated machine profile names.
    #[arg(long, global = true, value_delimiter = ',')]
    machines: Option<Vec<String>>,
    /// Comma-separated strategies: plurality, average, accuracy_weighted.
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let f = cli.flags;
    let mut config = match &f.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(Overrides {
        task: f.task,
        qubits: f.qubits,
        sizes: f.sizes,
        machines: f.machines,
        strategies: f.strategies,
        seeds: f.seeds,
        out: f.out,
    });
    config.validate()?;
    let command = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::SweepQubits => Command::SweepQubits,
        Cmd::SweepEnsemble => Command::SweepEnsemble,
        Cmd::Compare => Command::Compare,
        Cmd::Impact => Command::Impact,
    };
    let files = run(command, &config)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
