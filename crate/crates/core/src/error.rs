use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("overlapping spans ({first_start},{first_end}) and ({second_start},{second_end})")]
    Overlap {
        first_start: usize,
        first_end: usize,
        second_start: usize,
        second_end: usize,
    },

    #[error("span ({start},{end}) out of range for length {len}")]
    Range {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("shape mismatch for `{id}`: {message}")]
    ShapeMismatch { id: String, message: String },

    #[error("gold tag sequence is not allowed by the constraint mask at position {position}")]
    InvalidGold { position: usize },

    #[error("constraint mask admits no valid tag sequence")]
    Infeasible,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("corrupt model file: {0}")]
    Corruption(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown sentence id `{0}`")]
    UnknownSentence(String),

    #[error("sentence ids differ between layers: {0}")]
    IdMismatch(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("disagreement store is corrupt at line {line}: {message}")]
    StoreCorruption { line: usize, message: String },

    #[error("external annotator failed: {0}")]
    Annotator(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Whether this error stems from bad input data (as opposed to an
    /// internal or environment failure).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::File { .. })
    }
}
