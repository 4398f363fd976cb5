use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("mesh too coarse: at least {needed} nodes required, got {got}")]
    MeshTooCoarse { needed: usize, got: usize },

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureNonConvergence { estimate: f64, tolerance: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-convergent tail: {0}")]
    DivergentTail(String),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("stability budget violated: dt = {dt:e} exceeds the admissible {admissible:e}")]
    StabilityBudget { dt: f64, admissible: f64 },

    #[error("solution became non-finite at t = {t:e}")]
    NonFinite { t: f64 },

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
