use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report. Each variant maps onto a stable,
/// machine-parsable category string (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported encoding: {0}")]
    Unsupported(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(
        "frame-count mismatch for video '{video_id}': annotations={labels}, audio={audio}, video={video}"
    )]
    Alignment {
        video_id: String,
        labels: usize,
        audio: usize,
        video: usize,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("window coverage: {0}")]
    Coverage(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "file",
            Error::Format(_) => "format",
            Error::Unsupported(_) => "unsupported",
            Error::Domain(_) => "domain",
            Error::Range(_) => "range",
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Alignment { .. } | Error::LengthMismatch(_) => "alignment",
            Error::Corruption(_) => "corruption",
            Error::Shape(_) => "shape",
            Error::State(_) => "state",
            Error::Coverage(_) => "coverage",
            Error::Divergence { .. } => "divergence",
            Error::Usage(_) => "usage",
        }
    }
}
