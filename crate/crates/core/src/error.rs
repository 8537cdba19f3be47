use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument (dimension mismatch, out-of-range parameter, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A function or gradient evaluation produced a non-finite value.
    #[error("evaluation error at state {state:?}: {detail}")]
    Evaluation { detail: String, state: Vec<f64> },

    /// A fixed-point iteration failed to reach the requested residual.
    #[error("no convergence after {iters} iterations, last residual {residual:.3e}")]
    Convergence { iters: usize, residual: f64 },

    /// Adaptive step size fell below the representable floor.
    #[error("adaptive step underflow at t = {t}: step {step:.3e} < 1e-14")]
    StepUnderflow { t: f64, step: f64 },

    /// Not enough samples for the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
