use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ner",
    version,
    about = "Weakly-supervised company-name recognition",
    propagate_version = true
)]
pub struct Cli {
    /// Seed for every random choice; overrides config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Decode threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// More log output on stderr; repeat for debug detail.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, dictionary and unlabeled pool.
    Synth(SynthArgs),
    /// Add a coarse layer of dictionary matches.
    Match(MatchArgs),
    /// Add a coarse layer of dictionary matches plus secondary-annotator spans.
    Annotate(AnnotateArgs),
    /// Train the outline model or fine-tune it into the detail model.
    Train(TrainArgs),
    /// Write the records where a model disagrees with the coarse layer.
    Select(SelectArgs),
    /// Serve the disagreement queue over HTTP for review.
    ServeReview(ServeArgs),
    /// Write reviewed records as a dataset with a corrected layer.
    ExportCorrected(ExportArgs),
    /// Pseudo-label unlabeled sentences with a teacher model.
    Distill(DistillArgs),
    /// Train a student model on pseudo labels.
    TrainStudent(StudentArgs),
    /// Decode a dataset into a span layer.
    Predict(PredictArgs),
    /// Entity-level precision, recall and F1 of one layer against another.
    Eval(EvalArgs),
    /// Measure decode throughput.
    Bench(BenchArgs),
    /// Compare runs in one table.
    Report(ReportArgs),
    /// Run the whole workflow from one config file.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

/// Input dataset: `.jsonl`, column format (`.tsv`, `.col`, `.conll`, `.bio`)
/// or plain text (`.txt`, split into sentences).
#[derive(Debug, Args)]
pub struct Input {
    /// Input dataset.
    #[arg(long = "in", value_name = "PATH")]
    pub path: PathBuf,
    /// Dataset format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Column,
    Text,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Entity labels, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "COM")]
    pub labels: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// TOML file with training settings; flags below override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// SGD step size.
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 penalty coefficient.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without a dev-F1 gain before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Step-size decay per epoch.
    #[arg(long)]
    pub decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EmitterFlags {
    /// Feature window half-width.
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of feature hash buckets.
    #[arg(long)]
    pub hash_dim: Option<usize>,
    /// Seed of the feature hash.
    #[arg(long)]
    pub hash_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML synth config; flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Labeled sentences to generate.
    #[arg(long)]
    pub sentences: Option<usize>,
    /// Distinct company names.
    #[arg(long)]
    pub names: Option<usize>,
    /// Fraction of names placed in the dictionary.
    #[arg(long)]
    pub coverage: Option<f64>,
    /// Fraction of coarse spans with a shifted boundary.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Unlabeled sentences to generate.
    #[arg(long)]
    pub unlabeled: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Dictionary file, one surface per line.
    #[arg(long, value_name = "PATH")]
    pub dict: PathBuf,
    #[command(flatten)]
    pub input: Input,
    /// Output dataset.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Shortest surface kept from the dictionary, in characters.
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,
    /// Add abbreviations produced by the built-in suffix and prefix rules.
    #[arg(long)]
    pub abbreviations: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub matching: MatchArgs,
    /// JSON Lines of `{"id", "spans"}` proposed by another tagger.
    #[arg(long, value_name = "PATH", conflicts_with = "secondary_cmd")]
    pub secondary_replay: Option<PathBuf>,
    /// Program that reads sentence text on stdin and prints a JSON span array.
    #[arg(long, value_name = "PROGRAM")]
    pub secondary_cmd: Option<String>,
    /// Argument passed to the secondary program; repeatable.
    #[arg(long = "secondary-arg", value_name = "ARG", requires = "secondary_cmd")]
    pub secondary_args: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Outline,
    Detail,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Which stage to train.
    #[arg(long, value_enum)]
    pub stage: StageArg,
    /// Training dataset.
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Dev dataset with a gold layer, used for early stopping.
    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,
    /// Model to fine-tune; required for the detail stage.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Training layer; `coarse` for outline, `corrected` for detail by default.
    #[arg(long)]
    pub layer: Option<String>,
    #[command(flatten)]
    pub train_flags: TrainFlags,
    #[command(flatten)]
    pub emitter: EmitterFlags,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Model that decodes the coarse sentences.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Dataset with a coarse layer.
    #[command(flatten)]
    pub input: Input,
    /// Disagreement store to create.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Disagreement store.
    #[arg(long, env = "REVIEW_STORE", value_name = "PATH")]
    pub store: PathBuf,
    /// Listen address.
    #[arg(long, env = "REVIEW_BIND", default_value = wsner_review::DEFAULT_BIND)]
    pub bind: String,
    /// Dataset the records came from; every record is checked against it.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Directory of review UI files served at `/`.
    #[arg(long, value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Disagreement store.
    #[arg(long, value_name = "PATH")]
    pub store: PathBuf,
    /// Output dataset.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Teacher model.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: Input,
    /// Output dataset with a `pseudo` layer.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Sentences longer than this are skipped.
    #[arg(long, default_value_t = wsner::pipeline::DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct StudentArgs {
    /// Pseudo-labelled dataset.
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Dev dataset with a gold layer, used for early stopping.
    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Training layer.
    #[arg(long, default_value = "pseudo")]
    pub layer: String,
    #[command(flatten)]
    pub train_flags: TrainFlags,
    #[command(flatten)]
    pub emitter: EmitterFlags,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model to decode with.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: Input,
    /// Output dataset.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Layer that receives the predictions.
    #[arg(long, default_value = "predicted")]
    pub layer: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset holding both layers.
    #[command(flatten)]
    pub input: Input,
    /// Decode with this model instead of reading the predicted layer.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Layer holding predictions.
    #[arg(long, default_value = "predicted")]
    pub pred_layer: String,
    /// Layer holding reference spans.
    #[arg(long, default_value = "gold")]
    pub gold_layer: String,
    /// Also write the metrics as JSON here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model to decode with.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: Input,
    /// Untimed passes before measuring.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Timed passes; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Name recorded in the report.
    #[arg(long)]
    pub name: Option<String>,
    /// Write the report as JSON here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `NAME=METRICS.json` or `NAME=METRICS.json,BENCH.json`; repeatable, first is the baseline.
    #[arg(
        long = "run",
        value_name = "NAME=METRICS[,BENCH]",
        required_unless_present = "state"
    )]
    pub runs: Vec<String>,
    /// Pipeline state file to report on instead.
    #[arg(long, value_name = "PATH", conflicts_with = "runs")]
    pub state: Option<PathBuf>,
    /// Record-stream output (JSON Lines).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Run or resume every stage.
    Run(PipelineRunArgs),
    /// Print the state of a work directory.
    Status(PipelineStatusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Oracle,
    Review,
}

#[derive(Debug, Args)]
pub struct PipelineRunArgs {
    /// TOML pipeline config; flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Work directory; overrides the config.
    #[arg(long, value_name = "DIR")]
    pub work_dir: Option<PathBuf>,
    /// Existing corpus directory instead of a generated one.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Stop after this stage completes.
    #[arg(long)]
    pub stop_after: Option<String>,
    /// Where corrections come from.
    #[arg(long, value_enum)]
    pub corrections: Option<CorrectionArg>,
}

#[derive(Debug, Args)]
pub struct PipelineStatusArgs {
    /// Work directory.
    #[arg(long, value_name = "DIR", default_value = "run")]
    pub work_dir: PathBuf,
}
