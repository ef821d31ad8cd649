use thiserror::Error;

use crate::solver::CapacityResult;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter failed validation when a value type was built.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Adaptive quadrature ran out of subdivisions before meeting tolerance.
    #[error("quadrature tolerance not met: estimate {estimate:e}, error estimate {error:e} after {subdivisions} subdivisions")]
    ToleranceNotMet {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    /// The capacity iteration hit its iteration cap.
    #[error("capacity iteration did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence {
        iterations: usize,
        gap: f64,
        best: Box<CapacityResult>,
    },

    /// No multiplier inside the configured bracket meets the power target.
    #[error("no Lagrange multiplier in [{low}, {high}] meets average power {target}")]
    InfeasibleBracket { low: f64, high: f64, target: f64 },

    /// A computed Fisher information exceeds the unquantized value 1/sigma^2.
    #[error("Fisher information {value:e} exceeds the unquantized bound {limit:e}")]
    FisherBoundViolation { value: f64, limit: f64 },

    /// An analytic bound was requested outside its validity window.
    #[error("bound not valid: {0}")]
    BoundInvalid(String),

    /// A statistical check has cells below the minimum expected count.
    #[error("insufficient samples: {} undersized cell(s), first {}", .cells.len(), .cells.first().map(String::as_str).unwrap_or("-"))]
    InsufficientSamples { cells: Vec<String> },
}

pub type Result<T> = std::result::Result<T, Error>;
