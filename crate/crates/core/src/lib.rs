//! Numerical verification of the high-dimensional delta method.
//!
//! * [`linalg`]: dense vectors/matrices, the operator and entrywise norms,
//!   Cholesky solves and power-iteration eigenvalue bounds.
//! * [`delta_method`]: Jacobians, linearization remainders and the
//!   rate-transfer prediction `r_n / |J|` with its vanishing-Jacobian regime.
//! * [`lasso`]: coordinate-descent lasso with KKT certificates.
//! * [`data_gen`]: seeded designs, restriction matrices, banded precision
//!   matrices, Gaussian returns, sample covariances and GMV weights.
//! * [`experiments`]: Monte Carlo rate studies, log-log slope fits, reports.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_gen;
pub mod delta_method;
mod error;
pub mod exec;
pub mod experiments;
pub mod lasso;
pub mod linalg;

pub use error::{Error, Result};
