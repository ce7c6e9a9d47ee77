use thiserror::Error;

/// Errors raised by model construction, fitting and prediction.
#[derive(Debug, Error)]
pub enum GpError {
    #[error("input error: {0}")]
    Input(String),

    /// A factorization failed even after jitter escalation. `knots` carries the
    /// offending knot configuration when one was involved.
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        knots: Option<Vec<Vec<f64>>>,
    },

    #[error("newton iterations did not converge after {iterations} steps (max |grad psi| = {max_gradient:e}, psi = {objective})")]
    NewtonFailed {
        iterations: usize,
        max_gradient: f64,
        objective: f64,
    },

    #[error("non-finite gradient at coordinate {coordinate}")]
    NonFiniteGradient { coordinate: usize },

    #[error("proposal failed: {0}")]
    Proposal(String),
}

impl GpError {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        GpError::Numerical {
            message: message.into(),
            knots: None,
        }
    }

    pub(crate) fn input(message: impl Into<String>) -> Self {
        GpError::Input(message.into())
    }
}

pub type Result<T> = std::result::Result<T, GpError>;
