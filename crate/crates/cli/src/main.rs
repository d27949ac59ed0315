//! `genretag` command-line driver.
//!
//! Every subcommand reads and writes plain files: JSONL corpora, JSON model
//! envelopes (or the binary parameter container for recurrent models), JSONL
//! predictions and JSON reports. Progress goes to stderr; set `RUST_LOG` for
//! more detail.

mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use genretag::gru::Cell;
use genretag::textproc::TokenizerMode;

#[derive(Parser, Debug)]
#[command(
    name = "genretag",
    version,
    about = "Multi-label movie genre tagging from plot text"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Seeded train/validation/test split.
    Split(SplitArgs),
    /// Train a model of the given kind.
    Train(TrainArgs),
    /// Fit the per-movie threshold regressor on a model's training scores.
    FitThreshold(FitThresholdArgs),
    /// Predict genre sets for a corpus.
    Predict(PredictArgs),
    /// Score predictions against a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Predict the k most frequent training genres for every movie.
    Baseline(BaselineArgs),
    /// Search the recurrent network hyperparameter grid.
    GridSearch(GridSearchArgs),
    /// Nearest words by cosine distance in an embedding space.
    NearestWords(NearestWordsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TokenizerArg {
    Whitespace,
    Wordpunct,
}

impl From<TokenizerArg> for TokenizerMode {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Whitespace => TokenizerMode::Whitespace,
            TokenizerArg::Wordpunct => TokenizerMode::Wordpunct,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TokenizerOpts {
    #[arg(long, value_enum, default_value = "whitespace")]
    pub tokenizer: TokenizerArg,
    /// Keep original case.
    #[arg(long)]
    pub no_casefold: bool,
    /// Stopword file, one token per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Drop plots longer than this many tokens before counting.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tok: TokenizerOpts,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory receiving train.jsonl, validation.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub validation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Drop plots longer than this many tokens before splitting.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tok: TokenizerOpts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bnb,
    Mnb,
    Gbt,
    GruBinary,
    GruRank,
    GruMultinomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Gru,
    Sngru,
}

impl From<CellArg> for Cell {
    fn from(c: CellArg) -> Self {
        match c {
            CellArg::Gru => Cell::Gru,
            CellArg::Sngru => Cell::Sngru,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GbtOpts {
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0.3)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub min_child_hessian: f64,
}

#[derive(Args, Debug, Clone)]
pub struct GruOpts {
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 128)]
    pub embed_dim: usize,
    #[arg(long, value_enum, default_value = "sngru")]
    pub cell: CellArg,
    /// Recurrent dropout keep probability.
    #[arg(long, default_value_t = 0.8)]
    pub keep: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Tokens seen fewer times map to UNK.
    #[arg(long, default_value_t = 2)]
    pub min_count: u32,
    /// Vocabulary size including UNK and EOS.
    #[arg(long, default_value_t = 50_000)]
    pub max_vocab: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: ModelKind,
    /// Training corpus.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation corpus for recurrent model selection.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Naive Bayes smoothing.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Text embedding file (required for gbt).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Per-epoch CSV log for recurrent models.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tok: TokenizerOpts,
    #[command(flatten)]
    pub gbt: GbtOpts,
    #[command(flatten)]
    pub gru: GruOpts,
}

#[derive(Args, Debug)]
pub struct FitThresholdArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled corpus the targets are computed on (normally the training set).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output regressor file.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV dump of score vectors, truth bits and targets.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Overrides the embedding file recorded in a gbt model.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub gbt: GbtOpts,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output predictions (JSONL with `id` and `genres`).
    #[arg(long)]
    pub out: PathBuf,
    /// Learned threshold regressor from `fit-threshold`.
    #[arg(long, conflicts_with_all = ["top_k", "cut"])]
    pub threshold: Option<PathBuf>,
    /// Take the k highest-scoring genres.
    #[arg(long, conflicts_with = "cut")]
    pub top_k: Option<usize>,
    /// Independent cut-off on sigmoid scores.
    #[arg(long)]
    pub cut: Option<f64>,
    /// Overrides the embedding file recorded in a gbt model.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Labeled corpus.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSON report output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Row label in the printed table.
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub top_k: usize,
    /// Corpus the genre frequencies are counted on.
    #[arg(long)]
    pub train: PathBuf,
    /// Corpus to predict for.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Binary,
    Rank,
    Multinomial,
}

#[derive(Args, Debug)]
pub struct GridSearchArgs {
    #[arg(long, value_enum, default_value = "multinomial")]
    pub head: HeadArg,
    #[arg(long, required_unless_present = "dry_run")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Only enumerate the grid.
    #[arg(long)]
    pub dry_run: bool,
    /// CSV table output; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    pub grid_layers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256])]
    pub grid_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9])]
    pub grid_keep: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0002, 0.0005, 0.001, 0.003, 0.005, 0.008, 0.01, 0.02, 0.05])]
    pub grid_lr: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tok: TokenizerOpts,
    #[command(flatten)]
    pub gru: GruOpts,
}

#[derive(Args, Debug)]
pub struct NearestWordsArgs {
    /// Text embedding file.
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    pub embeddings: Option<PathBuf>,
    /// Recurrent model whose learned embedding table is searched.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, required = true)]
    pub word: Vec<String>,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    ExitCode::from(run(argv))
}

fn run(argv: Vec<String>) -> u8 {
    let argv = match config::merge_config(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &genretag::Error) -> u8 {
    eprintln!("error: {e}");
    if e.is_io() {
        2
    } else {
        1
    }
}
