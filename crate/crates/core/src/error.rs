use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the perspective crop library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),

    #[error("homogeneous point is at infinity (w = {0:e})")]
    PointAtInfinity(f64),

    #[error("degenerate bounding box: width {width:e}, height {height:e}")]
    DegenerateBoundingBox { width: f64, height: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rejection sampling exhausted after {0} consecutive attempts")]
    RejectionExhausted(usize),

    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
