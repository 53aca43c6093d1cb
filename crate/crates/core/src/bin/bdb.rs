// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use bdb_core::experiment::{self, Command, EXIT_CONFIG};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdb", version, about = "Phase-space spectral simulator for the Boltzmann-Dirac-Benney equation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `experiment.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to BDB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Evolve a perturbed equilibrium and fit its decay.
    Simulate,
    /// Criticality and Penrose sweeps over (lambda0, lambda1, U).
    Stability,
    /// Checks of the linearized group.
    Linear,
    /// Inequality battery on random finite-dimensional systems.
    Abstract,
    /// Gevrey norm traces and plot-ready columns.
    Norms,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Stability => Command::Stability,
        Cmd::Linear => Command::Linear,
        Cmd::Abstract => Command::Abstract,
        Cmd::Norms => Command::Norms,
    };
    let setup = experiment::resolve_threads(cli.threads)
        .and_then(|n| experiment::load_config(cli.config.as_deref(), cli.out, cli.seed).map(|c| (n, c)));
    let (threads, config) = match setup {
        Ok(v) => v,
        Err(e) => {
            eprintln!("bdb: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    experiment::init_threads(threads);
    let outcome = experiment::run(command, &config);
    for m in &outcome.messages {
        eprintln!("bdb {}: {m}", command.name());
    }
    for o in &outcome.outputs {
        println!("{}", config.out.join(o).display());
    }
    ExitCode::from(outcome.code as u8)
}
