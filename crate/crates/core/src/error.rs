use std::path::PathBuf;

use crate::fitter::FitReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for `{what}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("face behind camera: every vertex is at or behind the near plane")]
    FaceBehindCamera,

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("eye-state probe `{probe}` failed: {detail}")]
    Probe { probe: String, detail: String },

    #[error("embedding provider `{provider}` failed: {detail}")]
    Embedding { provider: String, detail: String },

    #[error("non-finite value in loss term `{term}`")]
    NonFinite { term: &'static str },

    #[error("optimization diverged at iteration {iteration} (total loss {loss})")]
    Diverged {
        iteration: usize,
        loss: f64,
        report: Box<FitReport>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            format,
            detail: detail.into(),
        }
    }
}
