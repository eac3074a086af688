//! Pipeline commands behind the `sonocaustics` binary.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Invert, resize and normalize the target picture.
    Prepare,
    /// Numeric phase optimization against the prepared target.
    Optimize,
    /// Pressure, surface, caustic and camera images for a plan.
    Render,
    /// Closed-loop refinement of a plan through the simulated plant.
    Twin,
    /// Prepare, optimize and render a sequence of targets.
    Animate,
    /// Discretized phases for the array driver.
    Export,
    /// Estimate the camera homography from the calibration board.
    Calib,
    /// Two-circle resolution harness and contrast report.
    Metrics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Optimize => "optimize",
            Command::Render => "render",
            Command::Twin => "twin",
            Command::Animate => "animate",
            Command::Export => "export",
            Command::Calib => "calib",
            Command::Metrics => "metrics",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sonocaustics", version, about = "Caustic images from ultrasonically shaped liquid surfaces")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Superimposed phase frames per image.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Steps of the stage this command runs.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory, overriding `paths.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Loads and validates the configuration, then runs the command. Returns
/// the manifest path.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    cfg.apply(
        cli.command.name(),
        Overrides {
            seed: cli.seed,
            frames: cli.frames,
            steps: cli.steps,
        },
    );
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    cfg.validate()?;
    match cli.command {
        Command::Prepare => commands::prepare(&cfg),
        Command::Optimize => commands::optimize(&cfg),
        Command::Render => commands::render(&cfg),
        Command::Twin => commands::twin(&cfg),
        Command::Animate => commands::animate(&cfg),
        Command::Export => commands::export(&cfg),
        Command::Calib => commands::calib(&cfg),
        Command::Metrics => commands::metrics(&cfg),
    }
}
