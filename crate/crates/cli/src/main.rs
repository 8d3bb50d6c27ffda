use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod manifest;

use commands::Failure;

/// Hidden Markov model learning: Belief Net, Baum-Welch and spectral baselines.
#[derive(Debug, Parser)]
#[command(name = "hmmforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Sample a synthetic HMM and train/validation datasets from it.
    Generate(GenerateArgs),
    /// Turn a text file into character-level train/validation datasets.
    Ingest(IngestArgs),
    /// Fit a model with one of the learning methods.
    Train(TrainArgs),
    /// Score a model on a dataset.
    Eval(EvalArgs),
    /// Fit every method at every candidate dimension.
    Sweep(SweepArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Hidden state dimension.
    #[arg(long)]
    pub d: usize,
    /// Vocabulary size.
    #[arg(long)]
    pub m: usize,
    /// Number of training sequences.
    #[arg(long)]
    pub n: usize,
    /// Sequence length.
    #[arg(long, default_value_t = 256)]
    pub t: usize,
    /// Weight of the cyclic permutation in A.
    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub temp_a: f64,
    #[arg(long, default_value_t = 0.01)]
    pub temp_c: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, env = "HMMFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// UTF-8 text corpus.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub t: usize,
    /// Chunk stride; defaults to `t` (no overlap).
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, env = "HMMFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Beliefnet,
    Baumwelch,
    Spectral,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: TrainMethod,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Candidate state dimension.
    #[arg(long)]
    pub d: usize,
    /// Learning rate; a comma-separated list runs a grid search.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub lr: Vec<f64>,
    /// Dropout rate; a comma-separated list runs a grid search.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub dropout: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    /// Gradient steps (beliefnet) or EM iterations (baumwelch).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub val_every: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Standard deviation of the initial logits.
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
    /// Cosine learning-rate decay instead of a constant rate.
    #[arg(long)]
    pub cosine: bool,
    /// Stop after this many validations without improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Stop EM once the log-likelihood gain falls below this.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[arg(long, env = "HMMFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Model JSON (HMM, logits or spectral).
    #[arg(long, required_unless_present = "uniform", conflicts_with = "uniform")]
    pub model: Option<PathBuf>,
    /// Score the uniform predictor instead of a model file.
    #[arg(long)]
    pub uniform: bool,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// True model, required for the oracle rows.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub dims: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "beliefnet,baumwelch,spectral,random,oracle"
    )]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1")]
    pub lr: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1")]
    pub dropout: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    /// Belief Net gradient steps per grid point.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 20)]
    pub em_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, env = "HMMFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let cli = Cli::try_parse_from(&argv).map_err(Failure::Clap)?;
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    commands::dispatch(cli.command, recorded)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
