use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the biometry pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate orientation: centroid separation {separation:.3e} is not above {threshold:.1e}")]
    DegenerateOrientation { separation: f64, threshold: f64 },

    /// EM hit `max_iterations` before the log-likelihood settled.
    #[error("EM did not converge after {iterations} iterations (last log-likelihood change {last_change:.3e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        last: Box<crate::dod::GmmFit>,
    },

    #[error("scale recovery failed: found {found} ruler markers, need at least {needed}")]
    ScaleRecoveryFailed { found: usize, needed: usize },

    /// Neither calibration metadata nor a usable ruler gave a pixel scale.
    #[error("no scale available: {0}")]
    NoScale(String),

    #[error("ellipse fit failed: {0}")]
    EllipseFit(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("training aborted at epoch {epoch}, step {step}: non-finite loss {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
