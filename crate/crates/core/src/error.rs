use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset contains no usable gestures")]
    EmptyDataset,

    #[error("feature `{0}` is constant over the training split")]
    DegenerateFeature(String),

    #[error("series is degenerate: {0}")]
    DegenerateSeries(&'static str),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} at index {index} is outside the Box-Cox domain")]
    Domain { index: usize, value: f64 },

    #[error("inverse Box-Cox undefined at index {index} (lambda * z + 1 = {base})")]
    Range { index: usize, base: f64 },

    #[error("Toeplitz system is singular at order {order} (reflection coefficient {reflection})")]
    Singular { order: usize, reflection: f64 },

    #[error("linear prediction filter is unstable at order {0}")]
    Unstable(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("fitting {candidate} failed: {reason}")]
    Fit {
        candidate: &'static str,
        reason: String,
    },

    #[error("no model for {0}")]
    MissingModel(String),

    #[error("model store error: {0}")]
    Store(String),

    #[error("serialization error: {0}")]
    Serde(String),
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
