//! Command-line pipeline for the LEO digital twin.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{ModelSource, Task};
use config::RunConfig;
pub use error::{exit, CliError, Result};

/// Exit codes: 0 success, 1 other failure, 2 parse or configuration error,
/// 3 missing input, 4 invariant violated during generation, 5 training
/// diverged, 6 checkpoint does not match the configuration.
#[derive(Debug, Parser)]
#[command(name = "leotwin", version, about = "LEO satellite network digital twin")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate element sets and write one ephemeris CSV per satellite.
    Propagate {
        /// Two- or three-line element set file.
        #[arg(long)]
        tle: PathBuf,
        /// Simulation time zero: RFC 3339 timestamp or Unix seconds.
        #[arg(long)]
        start: String,
        /// Span to propagate, s. Zero writes header-only files.
        #[arg(long)]
        duration: f64,
        /// Sample spacing, s.
        #[arg(long)]
        dt: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Apply J2 secular drift of the node and perigee.
        #[arg(long)]
        j2: bool,
    },
    /// Generate the channel dataset under `<output_dir>/channel/data`.
    GenChannel {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate the traffic dataset under `<output_dir>/traffic/data`.
    GenTraffic {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the channel diffusion model.
    TrainChannel {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Initial parameters.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the traffic graph network.
    TrainTraffic {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Initial parameters.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a model on the test split and write `<output_dir>/<task>/metrics.csv`.
    Eval {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Model family to score.
        #[arg(long, value_enum)]
        task: Task,
        /// Parameters to score; defaults to the trained checkpoint.
        #[arg(long, conflicts_with = "untrained")]
        checkpoint: Option<PathBuf>,
        /// Score a freshly initialized, seeded model.
        #[arg(long)]
        untrained: bool,
    },
}

/// Runs one subcommand and returns its stdout summary line.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Propagate {
            tle,
            start,
            duration,
            dt,
            out,
            j2,
        } => commands::propagate(tle, start, *duration, *dt, *j2, out),
        Command::GenChannel { config } => commands::gen_channel(&RunConfig::load(config)?),
        Command::GenTraffic { config } => commands::gen_traffic(&RunConfig::load(config)?),
        Command::TrainChannel { config, checkpoint } => {
            commands::train_channel(&RunConfig::load(config)?, checkpoint.as_deref())
        }
        Command::TrainTraffic { config, checkpoint } => {
            commands::train_traffic(&RunConfig::load(config)?, checkpoint.as_deref())
        }
        Command::Eval {
            config,
            task,
            checkpoint,
            untrained,
        } => {
            let source = match (checkpoint, untrained) {
                (_, true) => ModelSource::Untrained,
                (Some(p), false) => ModelSource::Checkpoint(p.clone()),
                (None, false) => ModelSource::Trained,
            };
            commands::eval(&RunConfig::load(config)?, *task, &source)
        }
    }
}
