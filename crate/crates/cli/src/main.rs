mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Spike-coding experiments: LIF and rate coders, noise tools and a spiking
/// residual denoiser.
#[derive(Parser, Debug)]
#[command(name = "spikecode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Firing rate and spike code of one LIF neuron over a grid of inputs.
    Staircase(StaircaseArgs),
    /// PSNR and activity of coded images as a function of T.
    Sweep(SweepArgs),
    /// Adds seeded Gaussian noise to an 8-bit image.
    AddNoise(AddNoiseArgs),
    /// PSNR between two 8-bit images (peak 255).
    Psnr(PsnrArgs),
    /// Trains a spiking denoiser on clean images.
    Train(TrainArgs),
    /// Denoises one image with a checkpoint.
    Denoise(DenoiseArgs),
    /// Noisy and denoised PSNR for every image of a corpus.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct LifArgs {
    #[arg(long, default_value_t = 1.0)]
    pub vth: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
}

#[derive(Args, Debug)]
pub struct StaircaseArgs {
    #[command(flatten)]
    pub lif: LifArgs,
    #[arg(long, default_value_t = 8)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub xmin: f64,
    /// Defaults to 1.5 * vth * tau.
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long, default_value_t = 3001)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// lif or rate.
    #[arg(long)]
    pub scheme: String,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated timestep counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub t_list: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Realizations averaged per point for the rate scheme.
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[command(flatten)]
    pub lif: LifArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AddNoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PsnrArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of clean training images.
    #[arg(long)]
    pub data: PathBuf,
    /// Clean held-out images for the per-epoch validation PSNR.
    #[arg(long = "val")]
    pub validation: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// lif or rate.
    #[arg(long)]
    pub encoding: Option<String>,
    #[arg(long)]
    pub max_patches: Option<usize>,
    /// Any configuration key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Tile side for inference; 0 processes the whole image at once.
    #[arg(long, default_value_t = 96)]
    pub tile: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of clean test images.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise level; defaults to the one the checkpoint was trained at.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `<name>_noisy.png` and `<name>_denoised.png` here.
    #[arg(long)]
    pub save_dir: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SPIKECODE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation(format!("SPIKECODE_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Staircase(a) => commands::staircase(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::AddNoise(a) => commands::add_noise(&a),
        Command::Psnr(a) => commands::psnr(&a),
        Command::Train(a) => commands::train(&a),
        Command::Denoise(a) => commands::denoise(&a),
        Command::Eval(a) => commands::eval(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
