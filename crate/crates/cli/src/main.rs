//! `ringfit`: simulate, fit, predict, evaluate and benchmark tensor ring
//! completion from the command line.

mod cmd;
mod error;
mod fit_config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ringfit", version, about = "Bayesian tensor ring completion")]
pub struct Cli {
    /// Worker threads for the engines (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run every engine step serially.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic train/test pair from a random ring.
    Simulate(SimulateArgs),
    /// Fit a model with the Gibbs sampler or online variational EM.
    Fit(FitArgs),
    /// Posterior-mean predictions from a checkpoint.
    Predict(PredictArgs),
    /// Score predictions against held-out entries.
    Eval(EvalArgs),
    /// Time one Gibbs sweep and one online epoch across tensor sizes.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Gibbs,
    Online,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Mode sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    /// Ring rank of the ground truth.
    #[arg(long)]
    rank: usize,
    /// Signal-to-noise ratio in dB (continuous data).
    #[arg(long, conflicts_with = "noiseless")]
    snr: Option<f64>,
    /// Continuous data without noise.
    #[arg(long)]
    noiseless: bool,
    /// Fraction of entries held out for testing.
    #[arg(long, default_value_t = 0.1)]
    missing: f64,
    #[arg(long, value_enum, default_value_t = Kind::Continuous)]
    kind: Kind,
    /// Binary data: multiplier on the standardized logits.
    #[arg(long, default_value_t = 1.0)]
    signal_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for train.txt, test.txt, truth.json and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    /// Training data in the sparse text format.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with `[gibbs]` / `[online]` tables; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier `fit`.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    /// Also write checkpoint.json every this many sweeps or epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[command(flatten)]
    overrides: FitOverrides,
}

#[derive(Args, Debug, Default)]
pub struct FitOverrides {
    /// Initial rank (Gibbs) or fixed rank (online).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub beta0: Option<f64>,
    /// Core prior precision.
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Fit continuous data on its raw scale instead of standardizing it.
    #[arg(long)]
    pub no_standardize: bool,

    #[arg(long, help_heading = "Gibbs")]
    pub burn_in: Option<usize>,
    #[arg(long, help_heading = "Gibbs")]
    pub samples: Option<usize>,
    #[arg(long, help_heading = "Gibbs")]
    pub thin: Option<usize>,
    /// Keep the initial rank fixed.
    #[arg(long, help_heading = "Gibbs")]
    pub no_adapt: bool,
    /// Prune threshold on weight magnitude.
    #[arg(long, help_heading = "Gibbs")]
    pub epsilon: Option<f64>,
    #[arg(long, help_heading = "Gibbs", allow_hyphen_values = true)]
    pub kappa0: Option<f64>,
    #[arg(long, help_heading = "Gibbs", allow_hyphen_values = true)]
    pub kappa1: Option<f64>,
    #[arg(long, help_heading = "Gibbs")]
    pub min_rank: Option<usize>,
    #[arg(long, help_heading = "Gibbs")]
    pub max_rank: Option<usize>,

    #[arg(long, help_heading = "Online")]
    pub batch_size: Option<usize>,
    #[arg(long, help_heading = "Online")]
    pub epochs: Option<usize>,
    #[arg(long, help_heading = "Online")]
    pub step_size: Option<f64>,
    #[arg(long, help_heading = "Online")]
    pub step_decay: Option<f64>,
    /// Pick the rank from these candidates on a validation split.
    #[arg(long, help_heading = "Online", value_delimiter = ',')]
    pub select_rank: Vec<usize>,
    /// Validation fraction for --select-rank.
    #[arg(long, help_heading = "Online", default_value_t = 0.1)]
    pub validation: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sparse file whose indices are predicted; its values are ignored.
    #[arg(long)]
    indices: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Held-out entries in the sparse text format.
    #[arg(long)]
    test: PathBuf,
    /// truth.json from `simulate`: supplies the PSNR range and true ranks.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Checkpoint whose estimated ranks are scored against the truth.
    #[arg(long, requires = "truth")]
    checkpoint: Option<PathBuf>,
    /// PSNR data range (overrides the truth file).
    #[arg(long)]
    data_range: Option<f64>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Mode sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,30,50")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 0.999)]
    missing: f64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings shared by every command.
pub struct Context {
    pub threads: usize,
    pub deterministic: bool,
    pub quiet: bool,
}

impl Context {
    pub fn parallel(&self) -> bool {
        !self.deterministic
    }

    pub fn progress(&self, line: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{line}");
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match (cli.deterministic, cli.threads) {
        (true, _) => 1,
        (false, Some(0)) => return Err(CliError::Usage("--threads must be positive".into())),
        (false, Some(n)) => n,
        (false, None) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    let ctx = Context {
        threads,
        deterministic: cli.deterministic,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Simulate(a) => cmd::simulate(&ctx, a),
        Command::Fit(a) => cmd::fit(&ctx, a),
        Command::Predict(a) => cmd::predict(&ctx, a),
        Command::Eval(a) => cmd::eval(&ctx, a),
        Command::Bench(a) => cmd::bench(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
