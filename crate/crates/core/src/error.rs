//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix shape {m}x{k}: both dimensions must be >= 1")]
    InvalidShape { m: usize, k: usize },

    #[error("scheme {scheme} requires a square matrix, got {m}x{k}")]
    SquareSchemeShape {
        scheme: &'static str,
        m: usize,
        k: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("degenerate Gaussian draw: smallest eigenvalue {min_eigenvalue:.3e} below threshold")]
    DegenerateDraw { min_eigenvalue: f64 },

    #[error("activation {name} has no finite sup-norm bound; bound evaluation is undefined")]
    UnboundedActivation { name: String },

    #[error("correlation {c} outside [-1, 1]")]
    InvalidCorrelation { c: f64 },

    #[error("covariance diagonal ({d0}, {d1}) is not the unit diagonal required here")]
    CovarianceNotUnitDiagonal { d0: f64, d1: f64 },

    #[error("covariance is not positive semidefinite: smallest eigenvalue {min_eigenvalue:.3e}")]
    CovarianceNotPsd { min_eigenvalue: f64 },

    #[error("{which} violates the norm constraint: expected squared norm {expected}, got {got}")]
    NormConstraint {
        which: &'static str,
        expected: f64,
        got: f64,
    },

    #[error("second moment {value:.3e} too small to normalize")]
    VanishingSecondMoment { value: f64 },

    #[error("alpha must be positive, got {alpha}")]
    NonPositiveAlpha { alpha: f64 },

    #[error("degenerate input pair: zero vector")]
    DegeneratePair,

    #[error("{0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
