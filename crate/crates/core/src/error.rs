use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("all consensus weights underflowed to zero")]
    WeightUnderflow,

    #[error("objective `{0}` lacks the constants required for this check")]
    MissingConstants(String),

    #[error("modulated objective is not strongly convex: 1 + tau*lambda = {0}")]
    NotStronglyConvex(f64),

    #[error("prox solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    ProxNotConverged {
        iterations: usize,
        best_residual: f64,
    },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("reconstruction identity violated at step {step}: residual {residual:e}")]
    IdentityViolation { step: usize, residual: f64 },

    #[error("error floor {floor:e} exceeds half of the smallest measured error {smallest:e}")]
    RegimeInvalid { floor: f64, smallest: f64 },

    #[error("estimated ball mass is zero; radius too small for the sample budget")]
    ZeroBallMass,

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
