//! `sswd`: train, apply and evaluate semantic specialization for WSD.

mod commands;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sswd_core::{Toggles, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "sswd", version, about = "Semantic specialization for knowledge-based word sense disambiguation")]
struct Cli {
    /// Worker threads; overrides SSWD_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train both residual maps and write checkpoints and a step log.
    Train(TrainCmd),
    /// Predict a sense for every evaluation instance.
    Predict(PredictCmd),
    /// Score a predictions file against the lexicon's gold labels.
    Evaluate(EvaluateCmd),
    /// Similarity-margin distribution and similarity characteristics.
    Analyze(AnalyzeCmd),
    /// Train and score on the development subset over a parameter grid.
    Sweep(SweepCmd),
    /// Mean and standard deviation over several report.json files.
    Aggregate(AggregateCmd),
    /// Write a small synthetic dataset.
    MakeToy(MakeToyCmd),
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    #[arg(long)]
    pub sense_vecs: PathBuf,
    #[arg(long)]
    pub sense_keys: PathBuf,
    #[arg(long)]
    pub ctx_vecs: PathBuf,
    #[arg(long)]
    pub ctx_keys: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
}

impl Inputs {
    pub fn paths(&self) -> Vec<&std::path::Path> {
        vec![&self.sense_vecs, &self.sense_keys, &self.ctx_vecs, &self.ctx_keys, &self.lexicon]
    }
}

#[derive(Args, Debug, Clone)]
pub struct Hyper {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Minibatch size for both senses and words.
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub nb: usize,
    #[arg(long, default_value_t = TrainConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = TrainConfig::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = TrainConfig::default().beta)]
    pub beta: f64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    /// Hidden width of the maps; defaults to the embedding dimension.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_attract_repel: bool,
    #[arg(long)]
    pub no_self_training: bool,
    #[arg(long)]
    pub no_repel_unrelated: bool,
    #[arg(long)]
    pub no_repel_different: bool,
    #[arg(long)]
    pub no_context_adapt: bool,
    #[arg(long, default_value_t = 1.0)]
    pub self_train_fraction: f64,
}

impl Hyper {
    /// The flag values as a config; call `validate` before use.
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.nb,
            alpha: self.alpha,
            epsilon: self.epsilon,
            beta: self.beta,
            learning_rate: self.lr,
            epochs: self.epochs,
            hidden: self.hidden,
            seed: self.seed,
            toggles: Toggles {
                attract_repel: !self.no_attract_repel,
                self_training: !self.no_self_training,
                repel_unrelated: !self.no_repel_unrelated,
                repel_different: !self.no_repel_different,
                adapt_context: !self.no_context_adapt,
                ..Toggles::default()
            },
            self_train_fraction: self.self_train_fraction,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub hyper: Hyper,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct Model {
    /// Trained checkpoint; one of this and `--identity` is required.
    #[arg(long, conflicts_with = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Use untrained identity maps (raw embeddings).
    #[arg(long)]
    pub identity: bool,
}

#[derive(Args, Debug)]
pub struct PredictCmd {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub model: Model,
    /// Rerank the top two candidates with coarse sense classes.
    #[arg(long)]
    pub tam: bool,
    /// Count a sense as its own class sibling when reranking.
    #[arg(long)]
    pub csi_include_self: bool,
    /// Predict the first listed sense instead of using embeddings.
    #[arg(long, conflicts_with_all = ["tam", "checkpoint", "identity"])]
    pub first_sense: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeCmd {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub model: Model,
    /// Batch size for the unrelated-sense batches.
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub nb: usize,
    /// Seed for the unrelated-sense batches.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CDF thresholds; defaults to -0.20..0.20 in steps of 0.01.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SweepParam {
    Epsilon,
    SelfTrainFraction,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub step: f64,
    /// Training seeds per grid point; defaults to --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AggregateCmd {
    /// report.json files, one per seed.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MakeToyCmd {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SSWD_WORKERS") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("SSWD_WORKERS={v:?} is not a count"))?)),
        Err(_) => Ok(None),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = workers(cli.workers)? {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Predict(c) => commands::predict(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Analyze(c) => commands::analyze(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Aggregate(c) => commands::aggregate(&c),
        Command::MakeToy(c) => commands::make_toy(&c),
    }
}
