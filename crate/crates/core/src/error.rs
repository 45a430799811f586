use std::path::PathBuf;

/// Errors raised by the merging, search and persistence layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid evaluator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("archive too small: need {needed} records, have {available}")]
    ArchiveTooSmall { needed: usize, available: usize },

    #[error("empty {0} set")]
    EmptySet(&'static str),

    #[error("empty training batch")]
    EmptyBatch,

    #[error("need at least {needed} seeds, got {got}")]
    InsufficientSeeds { needed: usize, got: usize },

    #[error("batch evaluation failed at index {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
