use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate word `{0}`")]
    DuplicateWord(String),

    #[error("no count entry for word `{0}`")]
    MissingCount(String),

    #[error("non-finite value for `{0}`")]
    NonFinite(String),

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("word `{0}` is not in the vocabulary")]
    UnknownWord(String),

    #[error("word `{0}` is excluded from the ranking")]
    ExcludedTarget(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough context sentences for `{word}`: need {needed}, have {available}")]
    InsufficientSentences {
        word: String,
        needed: usize,
        available: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate inferred vector: {0}")]
    Degenerate(String),

    #[error("no known character n-grams for `{0}`")]
    DegenerateForm(String),

    #[error("no vocabulary word shares the stem of `{0}`")]
    NoStemMatch(String),

    #[error("singular normal equations; raise the ridge penalty")]
    Singular,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True when a method declined to produce a vector rather than failing.
    pub fn is_abstention(&self) -> bool {
        matches!(
            self,
            Error::NoStemMatch(_)
                | Error::Degenerate(_)
                | Error::DegenerateForm(_)
                | Error::ZeroVector
                | Error::UnknownWord(_)
        )
    }
}
