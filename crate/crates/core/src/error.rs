use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection and prototype pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training aborted: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
