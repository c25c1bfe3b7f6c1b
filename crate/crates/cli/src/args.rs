use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Earnestness analytics for lecture poll responses.
#[derive(Debug, Parser)]
#[command(name = "eit", version)]
pub struct Cli {
    /// Data directory holding the corpus, labels, runs and caches.
    #[arg(long, global = true, env = "EIT_DATA_DIR", default_value = "eit-data")]
    pub data_dir: PathBuf,

    /// Static embedding model (safetensors with a vocab.txt beside it);
    /// the built-in trigram encoder is used when absent.
    #[arg(long, global = true, env = "EIT_MODEL_PATH")]
    pub model_path: Option<PathBuf>,

    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data directory layout.
    Init,
    /// Import poll responses from a delimited export.
    Ingest(IngestArgs),
    /// Draw the imbalance-aware annotation sample for a question.
    Sample(SampleArgs),
    /// Import, export, record or summarize rubric labels.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Classify every response of a question.
    Classify(ClassifyArgs),
    /// Evaluate a grid of training-set sizes.
    Ablate(AblateArgs),
    /// Project a question's responses to 2-D with t-SNE.
    Project(ProjectArgs),
    /// Attendance and at-risk reports.
    Report(ReportArgs),
    /// List stored classification runs.
    Runs(RunsArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Response export to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Column mapping (TOML); canonical column names when absent.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Question definitions to load first.
    #[arg(long)]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long, default_value_t = eit_core::pipeline::DEFAULT_SEED)]
    pub seed: u64,
    /// Upper bound on the sample size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.2)]
    pub tail_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub per_metric_fraction: f64,
    /// Write the sample as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LabelsCommand {
    /// Import labels from CSV (annotator_id,question_id,normalized_text,score,labeled_at).
    Import {
        file: PathBuf,
    },
    /// Export all labels as CSV.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-rater agreement.
    Agreement {
        #[arg(long)]
        question: Option<String>,
    },
    /// Record one label.
    Record {
        #[arg(long)]
        annotator: String,
        #[arg(long)]
        question: String,
        #[arg(long)]
        text: String,
        #[arg(long, allow_negative_numbers = true)]
        score: i64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Embedding,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    Euclidean,
    Cosine,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub question: String,
    /// Share of the non-earnest pool used as training negatives.
    #[arg(long, default_value_t = 0.5)]
    pub pool_frac: f64,
    /// Most frequent responses used as earnest training examples.
    #[arg(long, default_value_t = 20)]
    pub earnest_seeds: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "embedding")]
    pub space: SpaceArg,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub distance: DistanceArg,
    #[arg(long, default_value_t = eit_core::pipeline::DEFAULT_SEED)]
    pub seed: u64,
    /// Restrict the pool to these questions (repeatable).
    #[arg(long = "pool-question")]
    pub pool_questions: Vec<String>,
    /// Write per-response classes as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Instead of classifying, cross-validate on the question's labels.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// `default` (0.10,0.25,0.50 × 5,10,20) or `FRACTIONS:COUNTS`, e.g. `0.1,0.5:5,20`.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Question supplying earnest seeds; the most labeled one when absent.
    #[arg(long)]
    pub question: Option<String>,
    /// Evaluation labels CSV; the stored labels when absent.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Evaluate on one question only.
    #[arg(long)]
    pub eval_question: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub distance: DistanceArg,
    #[arg(long, default_value_t = eit_core::pipeline::DEFAULT_SEED)]
    pub seed: u64,
    /// Write the grid as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Gaussian,
    Pca,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub init: InitArg,
    #[arg(long, default_value_t = eit_core::pipeline::DEFAULT_SEED)]
    pub seed: u64,
    /// Color unlabeled points by this run's classes.
    #[arg(long)]
    pub run: Option<String>,
    /// Coordinates CSV (text,x,y,class).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scatter plot SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Students whose recent responses are mostly non-earnest.
    #[arg(long)]
    pub atrisk: bool,
    /// Semester attendance for every student.
    #[arg(long)]
    pub attendance: bool,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub min_responses: usize,
    /// Write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunsArgs {
    /// Show one run in full.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Built triage UI to serve under /ui.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
