use thiserror::Error;

/// Errors raised by the integrators and their supporting modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A history was evaluated outside of `[-tau, 0]`.
    #[error("theta = {theta} lies outside the history domain [-{tau}, 0]")]
    Domain { theta: f64, tau: f64 },

    /// An operation received arguments that break its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation that only makes sense for one history flavour got the other.
    #[error("operation requires a {expected} history")]
    Kind { expected: &'static str },

    #[error("unknown method `{0}` (expected one of: expeuler, heun, expo3)")]
    UnknownMethod(String),

    #[error("unknown problem `{0}` (expected one of: belzen, quadratic_re, daphnia)")]
    UnknownProblem(String),

    /// Problem parameters or mesh constraints rejected at setup time.
    #[error("setup error: {0}")]
    Setup(String),

    /// A stage produced NaN or an infinite value.
    #[error("non-finite value in step {step}, stage {stage}")]
    NonFinite { step: usize, stage: usize },

    #[error("order estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
