use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the search and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("query `{query_id}` references unknown ground-truth document `{gt_id}`")]
    UnknownGroundTruth { query_id: String, gt_id: String },

    #[error("unsupported index version: found `{found}`, expected `{expected}`")]
    Version { found: String, expected: String },

    #[error("preprocessing mismatch: artifact built with `{built}`, query uses `{requested}`")]
    PrepMismatch { built: String, requested: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("unknown {what} `{name}` (expected one of: {expected})")]
    Unknown {
        what: &'static str,
        name: String,
        expected: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("no embedding for document `{0}`")]
    MissingEmbedding(String),

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query `{query_id}`: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt artifact: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, Error>;

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

    /// True for failures originating in an external adapter process.
    pub fn is_adapter(&self) -> bool {
        match self {
            Error::Adapter(_) => true,
            Error::Query { source, .. } => source.is_adapter(),
            _ => false,
        }
    }
}
