use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("no slice passed the segmentation area threshold")]
    SegmentationEmpty,

    #[error("segmentation found {found} slices but at most {expected} were expected")]
    SegmentationAmbiguous { found: usize, expected: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("missing feature: {0}")]
    MissingFeature(String),

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("bisection could not bracket a drying time for target MC {target} in [{lo}, {hi}] min")]
    Bracket { target: f64, lo: f64, hi: f64 },

    #[error("invalid folds: {0}")]
    Folds(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checkpoint not found: {}", .0.display())]
    CheckpointNotFound(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
