use thiserror::Error;

/// Errors raised by the numerical core and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfwdError {
    #[error("grid function is not non-decreasing at index {index}: {left} > {right}")]
    NotMonotone { index: usize, left: f64, right: f64 },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("grid function must have at least one cell")]
    Empty,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("weight {value} at index {index} is not strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step {step}: {message}")]
    Step { step: u64, message: String },

    #[error("observable unavailable: {0}")]
    Observable(String),

    #[error("{0}")]
    Invariant(Box<crate::dynamics::InvariantViolation>),
}

pub type Result<T, E = CfwdError> = std::result::Result<T, E>;
