use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index}, limit {limit}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid array configuration: {0}")]
    Config(String),

    #[error("invalid convolution geometry: {0}")]
    Geometry(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("insufficient data: need at least {needed} traces, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate attack input: {0}")]
    Degenerate(String),

    #[error("trace/template alignment error: {0}")]
    Alignment(String),

    #[error("multi-phase attack failed while attacking column {column}: {source}")]
    PhaseFailure {
        column: usize,
        partial: Box<crate::attack::MultiphaseOutcome>,
        #[source]
        source: Box<Error>,
    },

    #[error("trace file format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors the CLI reports as a degenerate attack rather than a usage problem.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::PhaseFailure { .. })
    }
}
