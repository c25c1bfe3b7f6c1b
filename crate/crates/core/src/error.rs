use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),

    #[error("question `{0}` is not a word-cloud question")]
    NotWordCloud(String),

    #[error("unknown run `{0}`")]
    UnknownRun(String),

    #[error("invalid column mapping: {0}")]
    Mapping(String),

    #[error("column `{column}` (mapped for `{field}`) is not present in the header")]
    MissingColumn { field: String, column: String },

    #[error("invalid rubric score `{0}`: expected an integer from 1 to 5")]
    ScoreOutOfRange(String),

    #[error("no labels recorded for `{text}` in question `{question_id}`")]
    NoLabels { question_id: String, text: String },

    #[error("response text `{text}` does not belong to question `{question_id}`")]
    UnknownText { question_id: String, text: String },

    #[error("not enough annotators: {0}")]
    NotEnoughAnnotators(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class `{class}` has {found} members, fewer than the {folds} folds requested")]
    TooFewForFolds {
        class: String,
        found: usize,
        folds: usize,
    },

    #[error("embedding provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("data directory {} is not initialized (run `eit init`)", .0.display())]
    StoreNotInitialized(PathBuf),

    #[error("data directory {} is locked by another writer", .0.display())]
    StoreLocked(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
