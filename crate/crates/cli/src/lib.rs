//! Command-line front end: argument parsing, run configuration and the
//! subcommands. Every command is also callable as a library function.

pub mod commands;
pub mod config;
pub mod image;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use config::{preset, RunConfig, PRESETS};

#[derive(Debug, Parser)]
#[command(name = "qdsr", version, about = "Calibration-free super-resolution of point emitters")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration, merged over the preset
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for data generation and batch evaluation
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Named base configuration
    #[arg(long, global = true, value_name = "NAME", default_value = "paper")]
    pub preset: String,
}

impl GlobalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.preset, self.config.as_deref())?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.validate().context("invalid run configuration")?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate training pairs into an archive
    Simulate(commands::SimulateArgs),
    /// Train the network with incremental learning
    Train(commands::TrainArgs),
    /// Reconstruct a camera frame
    Infer(commands::InferArgs),
    /// Score reconstructions against ground truth
    Evaluate(commands::EvaluateArgs),
    /// Compare backpropagated gradients with finite differences
    Gradcheck(commands::GradcheckArgs),
    /// Render a PSF kernel and measure its geometry
    PsfPreview(commands::PsfPreviewArgs),
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.workers {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let cfg = cli.global.run_config()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, &a).map(|_| ()),
        Command::Train(a) => commands::train(&cfg, &a).map(|_| ()),
        Command::Infer(a) => commands::infer(&cfg, &a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a).map(|_| ()),
        Command::Gradcheck(a) => commands::gradcheck(&cfg, &a).map(|_| ()),
        Command::PsfPreview(a) => commands::psf_preview(&a).map(|_| ()),
    }
}
