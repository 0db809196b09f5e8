//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("insufficient length for {context}: need at least {required}, got {actual}")]
    InsufficientLength {
        context: String,
        required: usize,
        actual: usize,
    },

    #[error("insufficient data: need at least {required} rows, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("incomplete results: {0}")]
    Completeness(String),

    #[error("undefined baseline: reference MAE is zero")]
    UndefinedBaseline,

    #[error("no series produced results ({0} skipped)")]
    NoResults(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn too_short(context: impl Into<String>, required: usize, actual: usize) -> Self {
        Error::InsufficientLength {
            context: context.into(),
            required,
            actual,
        }
    }
}
