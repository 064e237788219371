//! `tactilemap`: batch pipelines from simulated tactile frames to surface
//! metrology and statistics.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tactilemap", version, about = "Tactile height-map reconstruction and metrology")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// JSON file with parameters for the subcommand; flags take precedence.
    #[arg(long, global = true, alias = "scene")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "TACTILEMAP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the calibration dataset and the channel objects.
    Simulate(commands::SimulateArgs),
    /// Run randomized touch-detection scenarios and report contact errors.
    Calibrate(commands::CalibrateArgs),
    /// Train the normal estimator on a calibration dataset.
    Train(commands::TrainArgs),
    /// Turn a tactile frame (or a normal map) into a height map.
    Reconstruct(commands::ReconstructArgs),
    /// Measure channel depths on a height map.
    Channels(commands::ChannelsArgs),
    /// Detect wrinkle valleys and estimate their depths.
    Wrinkles(commands::WrinklesArgs),
    /// Fit the gel modulus to indentation force curves.
    Hertz(commands::HertzArgs),
    /// Repeated-measures tests on a wrinkle-depth table.
    Stats(commands::StatsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let g = &cli.global;
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(g, a),
        Command::Calibrate(a) => commands::calibrate(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Reconstruct(a) => commands::reconstruct(g, a),
        Command::Channels(a) => commands::channels(g, a),
        Command::Wrinkles(a) => commands::wrinkles(g, a),
        Command::Hertz(a) => commands::hertz(g, a),
        Command::Stats(a) => commands::stats(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
