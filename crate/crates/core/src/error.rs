use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("objective is not finite ({value}) at {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    #[error("gradient has a non-finite entry at {point:?}")]
    NonFiniteGradient { point: Vec<f64> },

    #[error("point {point:?} lies outside the bounds")]
    OutOfBounds { point: Vec<f64> },

    #[error("bounds for coordinate {coord} leave no room for a finite-difference step")]
    DegenerateBounds { coord: usize },

    #[error("search direction is not a descent direction (slope {slope})")]
    NotDescent { slope: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("line {line}: cannot parse {token:?} as a number")]
    Parse { line: usize, token: String },
}

impl Error {
    /// True for evaluation failures a line search may recover from by
    /// shortening its step.
    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteObjective { .. } | Error::NonFiniteGradient { .. }
        )
    }
}
