//! `contrastad`: synthesize, train, score, evaluate, sweep and inspect graphs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contrastad::training::TrainConfig;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Set to anything but `0` or an empty string for progress on stderr.
pub const VERBOSE_ENV: &str = "CONTRASTAD_VERBOSE";

#[derive(Parser, Debug)]
#[command(name = "contrastad", version, about = "Multivariate time-series anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Train one model and save its checkpoint and loss trace.
    Train(TrainArgs),
    /// Score a split with a trained checkpoint.
    Score(ScoreArgs),
    /// Train and evaluate once per seed, or evaluate a given checkpoint.
    Eval(EvalArgs),
    /// Train and evaluate across a grid of graph-loss weights.
    Sweep(SweepArgs),
    /// Export snapshot graphs, degree distributions and divergences.
    InspectGraph(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    /// Total steps; the first half becomes train.csv.
    #[arg(long, default_value_t = 4000)]
    pub length: usize,
    /// Anomaly segments spread over the test half.
    #[arg(long, default_value_t = 3)]
    pub anomalies: usize,
    #[arg(long, default_value_t = 50)]
    pub anomaly_len: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Configuration sources. Flags override the file, which overrides defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with any subset of the training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub snapshots: Option<usize>,
    /// Fixed edge count per snapshot graph instead of the power-law budget.
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training window stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Train without the graph module.
    #[arg(long)]
    pub no_dgcl: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.snapshots {
            cfg.snapshots = v;
        }
        if self.edges.is_some() {
            cfg.edges = self.edges;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if self.no_dgcl {
            cfg.dgcl_enabled = false;
        }
        cfg.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding train.csv and test.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Scoring stride; defaults to the checkpoint's training stride.
    #[arg(long)]
    pub score_stride: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 42])]
    pub seeds: Vec<u64>,
    /// Evaluate this checkpoint instead of training.
    #[arg(long, conflicts_with_all = ["config", "lambda", "beta", "window", "snapshots", "edges", "epochs", "lr", "batch_size", "stride", "no_dgcl"])]
    pub model: Option<PathBuf>,
    /// Scoring stride; defaults to the training stride.
    #[arg(long)]
    pub score_stride: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    pub seeds: Vec<u64>,
    /// Comma-separated weights; defaults to -1.0, -0.9, ..., 1.0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Distance between inspected window starts; defaults to the window size.
    #[arg(long)]
    pub every: Option<usize>,
    /// Stop after this many windows.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A problem with how the command was invoked.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use contrastad::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<E>() {
        Some(E::NonFinite { .. }) => EXIT_NUMERIC,
        Some(E::InvalidArgument(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// The error chain, leaving out causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

pub fn verbose() -> bool {
    std::env::var(VERBOSE_ENV).is_ok_and(|v| !v.is_empty() && v != "0")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Score(a) => commands::score(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::InspectGraph(a) => commands::inspect_graph(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
