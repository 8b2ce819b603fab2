//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Shapes of interacting tensors or networks disagree.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An input or intermediate left the finite floating-point domain.
    #[error("numeric domain error in {op}: {detail}")]
    NumericDomain { op: &'static str, detail: String },

    /// A parameter update produced non-finite values and was rejected.
    #[error("update rejected: {0} non-finite entries produced by {1}")]
    UpdateRejected(usize, &'static str),

    /// Invalid argument outside the documented domain.
    #[error("invalid argument for {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    /// Structured parse failure in a binary or textual container.
    #[error("parse error in {path}: {detail} (offset {offset})")]
    Parse {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    /// Experiment configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// A referenced dataset or run artifact is missing.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
