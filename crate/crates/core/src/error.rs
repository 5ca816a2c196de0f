use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("degenerate task: {0}")]
    DegenerateTask(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Length { .. } => "length",
            Error::EmptyInput(_) => "empty-input",
            Error::Parameter(_) => "parameter",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Manifest(_) => "manifest",
            Error::DegenerateTask(_) => "degenerate-task",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::Undefined(_) => "undefined",
            Error::Training { .. } => "training",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
