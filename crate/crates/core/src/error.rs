use thiserror::Error;

/// Errors raised by the simulation, allocation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bin {bin} is empty or carries no weight")]
    EmptyBin { bin: usize },

    #[error("{particles} particles cannot cover {bins} occupied bins")]
    TooFewParticles { particles: usize, bins: usize },

    #[error("allocation infeasible with {particles} particles; smallest feasible count is {minimum}")]
    InfeasibleAllocation { particles: usize, minimum: usize },

    #[error("mean child counts sum to {sum}, expected {expected}")]
    MeanCountMismatch { sum: f64, expected: usize },

    #[error("every particle was killed at step {step}")]
    Extinct { step: usize },

    #[error("weight sum drifted by {drift:e} at step {step}")]
    WeightDrift { step: usize, drift: f64 },

    #[error("transition matrix is not row-stochastic (row {row} sums to {sum})")]
    NotStochastic { row: usize, sum: f64 },

    #[error("transition matrix is reducible")]
    Reducible,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear system is singular")]
    Singular,

    #[error("quadrature on [{lo}, {hi}] did not reach tolerance (error estimate {estimate:e})")]
    Quadrature { lo: f64, hi: f64, estimate: f64 },

    #[error("mesh would exceed {cap} points")]
    MeshTooFine { cap: usize },

    #[error("state is not covered by the coarse model")]
    Uncovered,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
