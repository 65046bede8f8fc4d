//! `qreforge`: solve quantal response equilibria of zero-sum games,
//! generate observation datasets from them, and learn game parameters back
//! from the observations.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical or convergence
//! failure. Set `QREFORGE_LOG=1` for progress output on stderr.

mod commands;
mod config;
mod experiments;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Malformed input: bad config, bad game file, missing data. Exit 1.
    Input(String),
    /// Solver or training failure. Exit 2.
    Numerical(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

/// True when `QREFORGE_LOG` asks for progress output.
pub fn log_enabled() -> bool {
    std::env::var("QREFORGE_LOG")
        .map(|v| !v.is_empty() && v != "0" && !v.eq_ignore_ascii_case("off"))
        .unwrap_or(false)
}

macro_rules! progress {
    ($($arg:tt)*) => {
        if crate::log_enabled() {
            eprintln!($($arg)*);
        }
    };
}
pub(crate) use progress;

#[derive(Parser)]
#[command(
    name = "qreforge",
    version,
    about = "Differentiable QRE solving and game-parameter learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single game and print the equilibrium as JSON.
    Solve {
        /// JSON game file (payoff matrix plus optional treeplexes).
        #[arg(long, conflicts_with = "config")]
        game: Option<PathBuf>,
        /// Experiment config describing a parametrized family instance.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override for seeded truth parameters.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample observation datasets from a family's ground-truth equilibrium.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the JSONL datasets and the manifest.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learn family parameters from a dataset; writes metrics.csv and
    /// params.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset (JSON Lines of observation records).
        #[arg(long)]
        data: PathBuf,
        /// Manifest with ground-truth parameters (defaults to
        /// manifest.json next to the dataset, when present).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a whole experiment grid (generate + train over sizes and seeds)
    /// and write summary CSVs of the recovery error.
    Reproduce {
        /// Which experiment: rps, poker, or security.
        experiment: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Use paper-scale epochs instead of the fast desk-scale defaults.
        #[arg(long)]
        full: bool,
        /// Worker threads for grid cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { game, config, seed } => {
            commands::solve::run(game.as_deref(), config.as_deref(), seed)
        }
        Command::Generate { config, out, seed } => commands::generate::run(&config, &out, seed),
        Command::Train {
            config,
            data,
            manifest,
            out,
            seed,
        } => commands::train::run(&config, &data, manifest.as_deref(), &out, seed),
        Command::Reproduce {
            experiment,
            out,
            seed,
            full,
            jobs,
        } => commands::reproduce::run(&experiment, &out, seed, full, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
