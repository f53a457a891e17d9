use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the unlearning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("degenerate embedding: norm {norm:e} is at or below the normalization cutoff")]
    DegenerateEmbedding { norm: f64 },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("no valid anchor: every anchor lacks the required positives or negatives")]
    NoValidAnchor,

    #[error("unlearnable configuration: {0}")]
    Unlearnable(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::EmptySet(_)
                | Error::Format(_)
                | Error::Integrity(_)
                | Error::Dimension { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
