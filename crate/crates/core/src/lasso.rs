//! Lasso for the linear model `y = X beta_0 + u` by cyclic coordinate descent.
//!
//! The criterion is
//!
//! ```text
//!     (1/n) sum_t (y_t - x_t' beta)^2  +  (lambda / n) sum_j |beta_j|
//! ```
//!
//! Note the `lambda / n` penalty scaling: most references write
//! `lambda |beta|_1`. Minimizing over one coordinate with partial residual
//! `r` gives `beta_j = S(x_j' r, lambda / 2) / |x_j|^2`, so `beta = 0` is
//! optimal iff `lambda >= 2 |X'y|_inf`.
//!
//! Coordinates are visited in ascending order. After each full sweep the
//! solver cycles over the current support until it settles, then confirms
//! with another full sweep; every sweep (full or support-only) counts
//! toward `max_sweeps`. The design is used as given, without rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{axpy, dot, vec_norm, DenseMatrix, DenseVector, NormKind};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_LAMBDA_C: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct LinearModelSpec {
    pub x: DenseMatrix,
    pub y: DenseVector,
    pub beta0: Option<DenseVector>,
    pub s0: usize,
    pub noise_sd: f64,
}

impl LinearModelSpec {
    pub fn new(x: DenseMatrix, y: DenseVector, beta0: Option<DenseVector>, noise_sd: f64) -> Result<Self> {
        if y.dim() != x.rows() {
            return Err(shape("LinearModelSpec y", x.rows(), y.dim()));
        }
        let s0 = match &beta0 {
            Some(b) if b.dim() != x.cols() => return Err(shape("LinearModelSpec beta0", x.cols(), b.dim())),
            Some(b) => b.count_nonzero(),
            None => 0,
        };
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(invalid("noise_sd must be nonnegative"));
        }
        Ok(Self {
            x,
            y,
            beta0,
            s0,
            noise_sd,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta_hat: DenseVector,
    pub lambda: f64,
    pub sweeps: usize,
    pub kkt_violation: f64,
    pub objective: f64,
    /// Criterion value before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `c * sqrt(ln p / n)`.
pub fn default_lambda(n: usize, p: usize, c: f64) -> Result<f64> {
    if p < 2 {
        return Err(invalid("default_lambda needs p >= 2 so that ln p > 0"));
    }
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if !(c > 0.0) {
        return Err(invalid("lambda constant must be positive"));
    }
    Ok(c * ((p as f64).ln() / n as f64).sqrt())
}

/// Column-major copy of the design with cached squared column norms, shared
/// across fits that reuse the same `X`.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    p: usize,
    columns: Vec<f64>,
    col_sq: Vec<f64>,
}

impl Design {
    pub fn new(x: &DenseMatrix) -> Result<Self> {
        let (n, p) = (x.rows(), x.cols());
        let columns = x.transpose().as_slice().to_vec();
        let col_sq: Vec<f64> = columns.chunks_exact(n).map(|c| dot(c, c)).collect();
        if let Some(j) = col_sq.iter().position(|s| *s == 0.0) {
            return Err(invalid(format!("design column {j} is identically zero")));
        }
        Ok(Self { n, p, columns, col_sq })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }

    fn residual(&self, y: &[f64], beta: &[f64]) -> Vec<f64> {
        let mut r = y.to_vec();
        for (j, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                axpy(-b, self.col(j), &mut r);
            }
        }
        r
    }

    fn objective_from_residual(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        let n = self.n as f64;
        dot(r, r) / n + lambda / n * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    pub fn objective(&self, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
        self.objective_from_residual(&self.residual(y, beta), beta, lambda)
    }

    pub fn kkt_violation(&self, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
        let r = self.residual(y, beta);
        let n = self.n as f64;
        let pen = lambda / n;
        (0..self.p)
            .map(|j| {
                let g = 2.0 / n * dot(self.col(j), &r);
                if beta[j] != 0.0 {
                    (g - pen * beta[j].signum()).abs()
                } else {
                    (g.abs() - pen).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// One pass over `coords`; returns the largest coefficient change.
    fn sweep(&self, coords: impl Iterator<Item = usize>, beta: &mut [f64], r: &mut [f64], half_lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for j in coords {
            let col = self.col(j);
            let old = beta[j];
            let z = dot(col, r) + self.col_sq[j] * old;
            let new = soft_threshold(z, half_lambda) / self.col_sq[j];
            if new != old {
                axpy(old - new, col, r);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        max_change
    }

    pub fn fit(&self, y: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Result<LassoFit> {
        if y.len() != self.n {
            return Err(shape("lasso fit", self.n, y.len()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda must be positive"));
        }
        if !(tol > 0.0) || max_sweeps == 0 {
            return Err(invalid("tol and max_sweeps must be positive"));
        }
        let half_lambda = 0.5 * lambda;
        let mut beta = vec![0.0; self.p];
        let mut r = y.to_vec();
        let mut trace = vec![self.objective_from_residual(&r, &beta, lambda)];
        let mut sweeps = 0;
        let mut kkt = f64::INFINITY;
        let mut converged = false;

        'outer: while sweeps < max_sweeps {
            let change = self.sweep(0..self.p, &mut beta, &mut r, half_lambda);
            sweeps += 1;
            trace.push(self.objective_from_residual(&r, &beta, lambda));
            if change < tol {
                kkt = self.kkt_violation(y, &beta, lambda);
                if kkt <= 10.0 * tol {
                    converged = true;
                    break;
                }
            }
            let active: Vec<usize> = (0..self.p).filter(|&j| beta[j] != 0.0).collect();
            if active.is_empty() {
                continue;
            }
            loop {
                if sweeps >= max_sweeps {
                    break 'outer;
                }
                let change = self.sweep(active.iter().copied(), &mut beta, &mut r, half_lambda);
                sweeps += 1;
                trace.push(self.objective_from_residual(&r, &beta, lambda));
                if change < tol {
                    break;
                }
            }
        }

        if !converged {
            kkt = self.kkt_violation(y, &beta, lambda);
        }
        let fit = LassoFit {
            objective: self.objective(y, &beta, lambda),
            beta_hat: DenseVector::from_vec_unchecked(beta),
            lambda,
            sweeps,
            kkt_violation: kkt,
            objective_trace: trace,
        };
        if converged {
            Ok(fit)
        } else {
            Err(Error::LassoConvergence(Box::new(fit)))
        }
    }
}

pub fn fit(spec: &LinearModelSpec, lambda: f64, tol: f64, max_sweeps: usize) -> Result<LassoFit> {
    Design::new(&spec.x)?.fit(spec.y.as_slice(), lambda, tol, max_sweeps)
}

pub fn kkt_check(spec: &LinearModelSpec, beta: &DenseVector, lambda: f64) -> Result<f64> {
    if beta.dim() != spec.p() {
        return Err(shape("kkt_check", spec.p(), beta.dim()));
    }
    Ok(Design::new(&spec.x)?.kkt_violation(spec.y.as_slice(), beta.as_slice(), lambda))
}

pub fn objective(spec: &LinearModelSpec, beta: &DenseVector, lambda: f64) -> Result<f64> {
    if beta.dim() != spec.p() {
        return Err(shape("objective", spec.p(), beta.dim()));
    }
    Ok(Design::new(&spec.x)?.objective(spec.y.as_slice(), beta.as_slice(), lambda))
}

pub fn estimation_error(beta_hat: &DenseVector, beta0: &DenseVector, kind: NormKind) -> Result<f64> {
    vec_norm(&beta_hat.sub(beta0)?, kind)
}
