use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A root finder or quadrature rule failed to converge.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Fisher matrix singular or otherwise degenerate at working precision.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A span-membership hypothesis on the model failed its numerical check.
    #[error("hypothesis {hypothesis} violated: span residual {residual:e}")]
    HypothesisViolation {
        hypothesis: &'static str,
        residual: f64,
    },

    #[error("integration unstable: {0}")]
    Stability(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
