use thiserror::Error;

use crate::problem::DecisionPoint;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The contraction condition `epsilon * L < gamma` fails, so equilibria
    /// need not be unique and the primal-dual map need not converge.
    #[error("not contractive: epsilon * L = {epsilon_l} >= gamma = {gamma}")]
    NotContractive { epsilon_l: f64, gamma: f64 },

    #[error("no convergence after {max_iters} iterations (residual {residual:e})")]
    MaxItersExceeded {
        max_iters: usize,
        residual: f64,
        last: Box<DecisionPoint>,
    },

    #[error("step size {eta} is not below the stability cap {cap}")]
    StepSizeTooLarge { eta: f64, cap: f64 },

    #[error("trajectory record at t = {t} has no equilibrium reference")]
    MissingEquilibrium { t: usize },

    #[error("day {day} out of range: series has {days} day(s)")]
    DayOutOfRange { day: usize, days: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed demand data: {0}")]
    MalformedDemand(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
