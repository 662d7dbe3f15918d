//! Operator entry point: corpus generation, feature caching, staged
//! training, noise sweeps, resource reports and accuracy/cost sweeps.
//!
//! Every command is deterministic given its inputs and seed. Results are
//! written as CSV or JSON next to a `RunRecord` describing how to
//! reproduce them.

mod commands;
mod record;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use avsr::error::Error;

pub use commands::{cmd_cache, cmd_eval_noise, cmd_resources, cmd_sweep, cmd_synth, cmd_train, open_corpus, NoiseRow};
pub use record::{RunRecord, RUN_RECORD_SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "avsr", version, about = "Audio-visual speech recognition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic audio-visual corpus.
    Synth(SynthArgs),
    /// Extract and cache MFCC features; fit normalization on the train split.
    Cache(CacheArgs),
    /// Train one model family (or all stages of an audio-visual model).
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split at several SNR levels.
    EvalNoise(EvalNoiseArgs),
    /// Report MACs, FLOPs, parameters and size of a model.
    Resources(ResourcesArgs),
    /// Train a grid of models and extract the accuracy/cost frontier.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Key-value spec file; defaults apply to missing keys.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output corpus directory.
    #[arg(long, env = "AVSR_CORPUS")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(long, env = "AVSR_CORPUS")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// acoustic, visual, audiovisual or audiovisual_attention; defaults to
    /// the config's modality. Acoustic and visual runs may point at an
    /// audio-visual config and use its sub-configs.
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long, env = "AVSR_CORPUS")]
    pub corpus: PathBuf,
    /// Model config; keys under `train.` set the optimizer schedule.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for checkpoints, metrics and run records.
    #[arg(long, env = "AVSR_OUT")]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.max_epochs`.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// For audio-visual runs: train the acoustic and visual stages first
    /// instead of reading their checkpoints from the output directory.
    #[arg(long)]
    pub all_stages: bool,
    /// For attention runs: SNR levels trained in order, e.g. `clean,10,0:5`
    /// (optional per-level epoch budget after the colon).
    #[arg(long)]
    pub noise_schedule: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalNoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, env = "AVSR_CORPUS")]
    pub corpus: PathBuf,
    /// Comma-separated SNR levels in dB, `clean` allowed.
    #[arg(long, default_value = "clean,20,10,5,0")]
    pub snr: String,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResourcesArgs {
    /// Model config file.
    #[arg(long, group = "source")]
    pub config: Option<PathBuf>,
    /// Checkpoint file.
    #[arg(long, group = "source")]
    pub checkpoint: Option<PathBuf>,
    /// Single dense layer `INxOUT`, e.g. `39x10`.
    #[arg(long, group = "source")]
    pub fc: Option<String>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Print the comparison against the published acoustic figures.
    #[arg(long)]
    pub discrepancy: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Grid file: `base.*` (or top-level) model keys, `grid.layers`,
    /// `grid.hidden`, optional `train.*`.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, env = "AVSR_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "AVSR_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_DATA
    }
}

pub fn execute(cli: Cli) -> avsr::error::Result<String> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Cache(a) => cmd_cache(&a),
        Command::Train(a) => cmd_train(&a),
        Command::EvalNoise(a) => cmd_eval_noise(&a),
        Command::Resources(a) => cmd_resources(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
