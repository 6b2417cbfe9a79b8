use thiserror::Error;

use crate::lasso::LassoFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not positive definite: pivot {pivot:e} at index {index}")]
    NotSpd { index: usize, pivot: f64 },

    #[error("{what} did not converge after {iterations} iterations ({diagnostic})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        diagnostic: String,
    },

    #[error("non-finite function value when probing coordinate {coordinate}")]
    Evaluation { coordinate: usize },

    #[error("insufficient evidence: need at least {needed} points, got {got}")]
    InsufficientEvidence { needed: usize, got: usize },

    #[error("lasso did not converge within {} sweeps (kkt violation {:e})", .0.sweeps, .0.kkt_violation)]
    LassoConvergence(Box<LassoFit>),

    #[error("degenerate portfolio: 1'x = {0:e}")]
    DegeneratePortfolio(f64),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Shape {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
