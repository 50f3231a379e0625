//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or signal model violates a structural assumption
    /// (non-finite density, non-positive scale, MLRP failure, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Operation requires a distribution family it does not support.
    #[error("unsupported distribution family: {0}")]
    UnsupportedFamily(String),

    /// A rule or scenario parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Adaptive quadrature did not converge.
    #[error("quadrature failed to converge on [{lo}, {hi}]")]
    IntegrationFailure { lo: f64, hi: f64 },

    /// An iterative root finder ran out of iterations.
    #[error("bisection failed to converge after {0} iterations")]
    NumericalFailure(u32),

    /// No rule in the searched family satisfies the quota.
    #[error("no feasible rule satisfies the quota")]
    Infeasible,

    /// A brute-force request would enumerate too many candidates.
    #[error("problem too large: {0}")]
    SizeLimit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
