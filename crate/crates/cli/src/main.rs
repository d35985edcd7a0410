//! `refexp`: data checks, synthetic data, training, comprehension,
//! generation, evaluation and report rendering.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
//! 3 corrupted or inconsistent input (integrity or parse failure), 4 numeric
//! failure. Failures print one line
//! `error: <category>: <message>` to stderr.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "refexp", version, about = "Referring-expression generation and comprehension")]
pub struct Cli {
    /// Seed for every random choice (splits, synthesis, initialization, shuffling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate or split a dataset.
    #[command(subcommand)]
    Data(DataCommand),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a speaker.
    Train(TrainArgs),
    /// Rank candidate regions for every expression of a split.
    Comprehend(ComprehendArgs),
    /// Decode one expression per region of a split.
    Generate(GenerateArgs),
    /// Score a checkpoint on one or more splits.
    Eval(EvalArgs),
    /// Render evaluation reports as text tables and CSV.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Load annotations and features, running every integrity check.
    Validate {
        annotations: PathBuf,
        features: PathBuf,
    },
    /// Write a train/test partition.
    Split(SplitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitMode {
    PerObject,
    PeopleVsObjects,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub annotations: PathBuf,
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SplitMode,
    /// Train share for per-object splits.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    /// Test share of each eligible scene pool for people-vs-objects splits.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Category name counted as people.
    #[arg(long, default_value = "person")]
    pub person_category: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub num_scenes: Option<usize>,
    #[arg(long)]
    pub relative_fraction: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Drop "on the left/right" phrases.
    #[arg(long)]
    pub no_location_words: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub tied: Option<bool>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_scenes: Option<usize>,
    #[arg(long)]
    pub mmi_weight: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub comparison_set: Option<ComparisonSetArg>,
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
    #[arg(long, value_enum)]
    pub context_source: Option<ContextSourceArg>,
    #[arg(long)]
    pub max_location_neighbors: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Include the visual and location difference blocks.
    #[arg(long)]
    pub visual_comparison: Option<bool>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Mle,
    Mmi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ComparisonSetArg {
    SameCategory,
    DifferentCategory,
    AllObjects,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolingArg {
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ContextSourceArg {
    Global,
    Scale2,
    Scale3,
    Scale4,
    None,
}

/// Where the evaluated model and data come from.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Override the annotation file recorded in the checkpoint.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Override the feature file recorded in the checkpoint.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Override the split file recorded in the checkpoint.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ComprehendArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Split name: a set of the split file, `val` (training holdout) or `all`.
    #[arg(long)]
    pub split: String,
    /// `gt` or a detections JSON file.
    #[arg(long, default_value = "gt")]
    pub candidates: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecodeArg {
    Greedy,
    Beam,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long, value_enum, default_value = "greedy")]
    pub decode: DecodeArg,
    #[arg(long, default_value_t = 3)]
    pub beam_width: usize,
    /// Decode same-category objects jointly.
    #[arg(long)]
    pub tied: bool,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub split: String,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Generation,
    Comprehension,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Repeatable; each split gets its own breakdown.
    #[arg(long = "split", required = true)]
    pub splits: Vec<String>,
    #[arg(long, default_value = "gt")]
    pub candidates: String,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Row label in rendered tables (default: the checkpoint's directory name).
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation reports written by `refexp eval`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// A failure with its exit code and category.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub category: String,
    pub message: String,
}

impl From<refexp::Error> for Failure {
    fn from(e: refexp::Error) -> Self {
        let code = match &e {
            refexp::Error::Integrity { .. } | refexp::Error::Parse(_) => 3,
            refexp::Error::Numeric(_) => 4,
            refexp::Error::Config(_) => 2,
            _ => 1,
        };
        let category = e.category().to_string();
        let text = e.to_string();
        // The Display text repeats the category ("parse error: ...",
        // "missing feature: ..."); keep only what follows it.
        let message = match text.split_once(": ") {
            Some((head, rest)) if head.trim_end_matches(" error").replace(' ', "-") == category => rest.to_string(),
            _ => text,
        };
        Failure { code, category, message }
    }
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            category: "usage".into(),
            message: message.into(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\n', " ");
            eprintln!("error: {}: {}", f.category, message);
            ExitCode::from(f.code)
        }
    }
}
