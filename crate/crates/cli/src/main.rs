use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod data;
mod error;

use config::Config;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "cxrtrees",
    version,
    about = "Tree ensembles and ensembling over chest X-ray embeddings"
)]
struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true, env = "CXRTREES_SEED")]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true, env = "CXRTREES_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CXRTREES_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write a synthetic embedding file, label CSV, hierarchy and split.
    GenSynthetic(GenSyntheticArgs),
    /// Assign samples to train, validation and test partitions.
    Split(SplitArgs),
    /// Train a forest or boosted model.
    Train(TrainArgs),
    /// Score embeddings with a trained model.
    Predict(PredictArgs),
    /// Average several classifiers' predictions.
    Ensemble(EnsembleArgs),
    /// Train or apply a stacking meta-learner.
    #[command(subcommand)]
    Stack(StackCommand),
    /// Fit per-label decision thresholds and the uncertain band.
    Calibrate(CalibrateArgs),
    /// AUROC, thresholds and confusion counts as a JSON report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Label CSV (`1`, `0`, `-1`, blank).
    #[arg(long)]
    pub labels: PathBuf,
    /// Finding columns to read, comma separated; default: all finding columns.
    #[arg(long, value_delimiter = ',')]
    pub label_names: Option<Vec<String>>,
    /// Blank cells: negative, uncertain or drop-sample.
    #[arg(long, env = "CXRTREES_UNMENTIONED")]
    pub unmentioned: Option<String>,
    #[arg(long, env = "CXRTREES_LSR_A")]
    pub lsr_a: Option<f64>,
    #[arg(long, env = "CXRTREES_LSR_B")]
    pub lsr_b: Option<f64>,
    /// Seed for smoothing uncertain labels; default: the master seed.
    #[arg(long, env = "CXRTREES_LSR_SEED")]
    pub lsr_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Split CSV (`sample_id,partition`).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Partition to use from the split file.
    #[arg(long, requires = "split")]
    pub partition: Option<String>,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long, env = "CXRTREES_N_ESTIMATORS")]
    pub n_estimators: Option<usize>,
    #[arg(long, env = "CXRTREES_MAX_DEPTH")]
    pub max_depth: Option<usize>,
    #[arg(long, env = "CXRTREES_MIN_SAMPLES_SPLIT")]
    pub min_samples_split: Option<usize>,
    #[arg(long, env = "CXRTREES_MIN_SAMPLES_LEAF")]
    pub min_samples_leaf: Option<usize>,
    /// sqrt, all, or a feature count.
    #[arg(long, env = "CXRTREES_MAX_FEATURES")]
    pub max_features: Option<String>,
    /// Boosting rounds.
    #[arg(long, env = "CXRTREES_ROUNDS")]
    pub rounds: Option<usize>,
    #[arg(long, env = "CXRTREES_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "CXRTREES_L2_LAMBDA")]
    pub l2_lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetaArgs {
    #[arg(long, env = "CXRTREES_META_N_ESTIMATORS")]
    pub n_estimators: Option<usize>,
    #[arg(long, env = "CXRTREES_META_MAX_DEPTH")]
    pub max_depth: Option<usize>,
    #[arg(long, env = "CXRTREES_META_MIN_SAMPLES_SPLIT")]
    pub min_samples_split: Option<usize>,
    #[arg(long, env = "CXRTREES_META_MIN_SAMPLES_LEAF")]
    pub min_samples_leaf: Option<usize>,
    #[arg(long, env = "CXRTREES_META_MAX_FEATURES")]
    pub max_features: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = "CXRTREES_N_SAMPLES")]
    pub n_samples: Option<usize>,
    #[arg(long, env = "CXRTREES_DIM")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub uncertain_fraction: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub feature_noise: Option<f64>,
    /// Also write this many disjoint feature views (`view0.emb`, ...).
    #[arg(long)]
    pub views: Option<usize>,
    /// Finding names, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub label_names: Option<Vec<String>>,
    /// Hierarchy file; default: the built-in CheXpert hierarchy.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Keep all images of a patient in one partition.
    #[arg(long)]
    pub group_by_patient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Forest,
    Boosted,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Training partition; `train` when a split file is given.
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "forest")]
    pub family: Family,
    /// Findings to model, comma separated; default: the focus findings present.
    #[arg(long, value_delimiter = ',')]
    pub focus: Option<Vec<String>>,
    /// Train children only on samples where every parent finding is positive.
    #[arg(long)]
    pub conditional: bool,
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// Replace soft targets with `target >= T`.
    #[arg(long)]
    pub binarize_at: Option<f64>,
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Pick forest depth, split and leaf sizes on the validation partition.
    #[arg(long, requires = "split")]
    pub grid_search: bool,
    #[arg(long, value_delimiter = ',')]
    pub grid_max_depth: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_min_samples_split: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_min_samples_leaf: Option<Vec<usize>>,
    /// Write the grid-search table as JSON.
    #[arg(long, requires = "grid_search")]
    pub grid_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Classifier name; default: the embedding file's source model.
    #[arg(long)]
    pub name: Option<String>,
    /// Convert conditional outputs to unconditional probabilities.
    #[arg(long)]
    pub propagate: bool,
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Prediction CSVs; every classifier in them takes part.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// simple or entropy.
    #[arg(long, env = "CXRTREES_STRATEGY")]
    pub strategy: Option<String>,
    /// Entropy weighting: normalized or paper-literal.
    #[arg(long, env = "CXRTREES_MODE")]
    pub mode: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum StackCommand {
    /// Fit meta-learners on held-out base predictions.
    Train(StackTrainArgs),
    /// Combine base predictions with a trained meta-learner.
    Apply(StackApplyArgs),
}

#[derive(Debug, Args)]
pub struct StackTrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Meta-training partition; `validation` when a split file is given.
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[command(flatten)]
    pub meta: MetaArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StackApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Classifier to calibrate when the file holds several.
    #[arg(long)]
    pub classifier: Option<String>,
    /// Calibration partition; `validation` when a split file is given.
    #[command(flatten)]
    pub partition: PartitionArgs,
    /// Fixed uncertain half-width.
    #[arg(long, conflicts_with = "auto_target")]
    pub delta: Option<f64>,
    /// Choose the half-width so this fraction of scores is uncertain.
    #[arg(long)]
    pub auto_target: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Evaluation partition; `test` when a split file is given.
    #[command(flatten)]
    pub partition: PartitionArgs,
    /// Thresholds from `calibrate`; default: 0.5 for every label.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Soft targets at or above this count as positive.
    #[arg(long)]
    pub truth_threshold: Option<f64>,
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave out timestamps, versions and directory paths.
    #[arg(long)]
    pub canonical: bool,
}

/// Settings shared by every command.
pub struct Global {
    pub seed: u64,
    pub config: Config,
}

fn run(cli: Cli) -> CliResult<()> {
    let config = Config::load(cli.config.as_deref())?;
    let threads = cli.threads.or(config.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let g = Global {
        seed: config::pick(cli.seed, config.seed, 0),
        config,
    };
    match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(&g, &a),
        Command::Split(a) => commands::split(&g, &a),
        Command::Train(a) => commands::train(&g, &a),
        Command::Predict(a) => commands::predict(&g, &a),
        Command::Ensemble(a) => commands::ensemble(&g, &a),
        Command::Stack(StackCommand::Train(a)) => commands::stack_train(&g, &a),
        Command::Stack(StackCommand::Apply(a)) => commands::stack_apply(&a),
        Command::Calibrate(a) => commands::calibrate(&g, &a),
        Command::Eval(a) => commands::eval(&g, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::new("usage", first).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
