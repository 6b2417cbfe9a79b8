//! Seeded synthetic data for both studies.
//!
//! Every generator is a pure function of its parameters and a [`Seed`].

mod rng;

use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{dot, gershgorin_bounds, Cholesky, DenseMatrix, DenseVector, EigenBounds};

pub use rng::{normal_vec, standard_normal, Seed, StreamRng};

impl Seed {
    /// A child seed for a sub-artifact, e.g. one replication of one cell.
    pub fn child(self, tag: &str, indices: &[u64]) -> Seed {
        Seed(self.derive(tag, indices))
    }
}

/// One `n x p` standard Gaussian draw with every column standardized to
/// sample mean 0 and (1/n) sample variance 1, so `|x_j|_2^2 = n`.
///
/// Draw once per `(n, p, seed)` and reuse across replications; the design
/// is deterministic from the estimator's point of view.
pub fn fixed_design(n: usize, p: usize, seed: Seed) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(invalid("fixed_design needs n >= 2 to standardize"));
    }
    if p == 0 {
        return Err(invalid("fixed_design needs p >= 1"));
    }
    let mut rng = seed.substream("design", &[n as u64, p as u64]);
    // generate column by column so each column is contiguous while scaling
    let mut cols = normal_vec(&mut rng, n * p);
    for col in cols.chunks_exact_mut(n) {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        let sd = (dot(col, col) / n as f64).sqrt();
        col.iter_mut().for_each(|v| *v /= sd);
    }
    let col_major = DenseMatrix::new(p, n, cols)?;
    Ok(col_major.transpose())
}

/// `magnitude` on the first `s0` coordinates, zero elsewhere.
pub fn sparse_beta(p: usize, s0: usize, magnitude: f64) -> Result<DenseVector> {
    if s0 == 0 || s0 > p {
        return Err(invalid(format!("s0 = {s0} must lie in 1..={p}")));
    }
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(invalid("magnitude must be positive"));
    }
    let mut beta = DenseVector::zeros(p);
    beta.as_mut_slice()[..s0].fill(magnitude);
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionMatrix {
    pub d: DenseMatrix,
    pub m: usize,
    pub s0_per_row: usize,
}

/// `m x p` restriction matrix with `s0_per_row` entries of `+-1` on the first
/// `s0_per_row` coordinates (the true support of [`sparse_beta`]).
///
/// Row `i` uses the Walsh sign pattern `(-1)^popcount(k & (i + 1))`; row 0
/// alternates `+1, -1, +1, ...`.
pub fn restriction_matrix(m: usize, p: usize, s0_per_row: usize) -> Result<RestrictionMatrix> {
    if m == 0 {
        return Err(invalid("need at least one restriction"));
    }
    if s0_per_row == 0 || s0_per_row > p {
        return Err(invalid(format!("s0_per_row = {s0_per_row} must lie in 1..={p}")));
    }
    let d = DenseMatrix::from_fn(m, p, |i, k| {
        if k < s0_per_row {
            if (k & (i + 1)).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    })?;
    Ok(RestrictionMatrix { d, m, s0_per_row })
}

/// Portfolio population: banded precision `Theta`, its inverse `Sigma`,
/// and the Cholesky factor of `Sigma` used to draw returns.
#[derive(Debug, Clone)]
pub struct PortfolioSpec {
    pub p: usize,
    pub precision: DenseMatrix,
    pub sigma: DenseMatrix,
    /// Largest number of nonzeros in any row of `precision`.
    pub s_max: usize,
    /// Gershgorin enclosure of the spectrum of `precision`.
    pub eig_bounds: EigenBounds,
    sigma_factor: Cholesky,
}

impl PortfolioSpec {
    pub fn sigma_factor(&self) -> &Cholesky {
        &self.sigma_factor
    }
}

/// Banded symmetric precision with unit diagonal and off-diagonal value
/// `-strength / (s_per_row - 1)` on the band of half-width
/// `(s_per_row - 1) / 2`. Interior rows have exactly `s_per_row` nonzeros
/// and absolute off-diagonal sum `strength`, so strict diagonal dominance
/// puts every eigenvalue in `[1 - strength, 1 + strength]` for any `p`.
pub fn banded_precision(p: usize, s_per_row: usize, strength: f64) -> Result<PortfolioSpec> {
    if s_per_row == 0 || s_per_row.is_multiple_of(2) {
        return Err(invalid(format!("s_per_row = {s_per_row} must be odd")));
    }
    if s_per_row > p {
        return Err(invalid(format!("s_per_row = {s_per_row} exceeds p = {p}")));
    }
    if !(strength > 0.0 && strength < 1.0) {
        return Err(invalid(format!(
            "strength = {strength} must lie in (0, 1) for strict diagonal dominance"
        )));
    }
    let half = (s_per_row - 1) / 2;
    let off = if s_per_row > 1 {
        -strength / (s_per_row - 1) as f64
    } else {
        0.0
    };
    let precision = DenseMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i.abs_diff(j) <= half {
            off
        } else {
            0.0
        }
    })?;
    let s_max = (0..p)
        .map(|i| precision.row(i).iter().filter(|v| **v != 0.0).count())
        .max()
        .unwrap_or(0);
    let eig_bounds = gershgorin_bounds(&precision);
    let sigma = Cholesky::factor(&precision)?.inverse();
    let sigma_factor = Cholesky::factor(&sigma)?;
    Ok(PortfolioSpec {
        p,
        precision,
        sigma,
        s_max,
        eig_bounds,
        sigma_factor,
    })
}

/// `n x p` matrix of iid `N(0, Sigma)` rows, `R = Z L'` with `Sigma = L L'`.
pub fn gaussian_returns(n: usize, spec: &PortfolioSpec, seed: Seed) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(invalid("gaussian_returns needs n >= 2"));
    }
    let p = spec.p;
    let l = spec.sigma_factor.lower();
    let mut rng = seed.substream("returns", &[n as u64, p as u64]);
    let z = normal_vec(&mut rng, n * p);
    let mut out = vec![0.0; n * p];
    for (z_row, r_row) in z.chunks_exact(p).zip(out.chunks_exact_mut(p)) {
        for i in 0..p {
            r_row[i] = dot(&l.row(i)[..=i], &z_row[..=i]);
        }
    }
    DenseMatrix::new(n, p, out)
}

/// `(1/n) sum_t (r_t - rbar)(r_t - rbar)'`.
pub fn sample_covariance(returns: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, p) = (returns.rows(), returns.cols());
    if n < 2 {
        return Err(invalid("sample_covariance needs at least 2 rows"));
    }
    // centered columns, stored contiguously
    let mut centered = returns.transpose();
    for j in 0..p {
        let col = centered.row_mut(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    let mut cov = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let c = dot(centered.row(i), centered.row(j)) / n as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok(cov)
}

/// Global minimum-variance weights `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.
pub fn gmv_weights(sigma: &DenseMatrix) -> Result<DenseVector> {
    let x = Cholesky::factor(sigma)?.solve(&DenseVector::ones(sigma.rows()))?;
    let total = x.sum();
    if !(total > 0.0) {
        return Err(Error::DegeneratePortfolio(total));
    }
    Ok(x.scale(1.0 / total))
}

/// Largest entrywise deviation of `sigma * precision` from the identity.
pub fn inverse_residual(spec: &PortfolioSpec) -> Result<f64> {
    if spec.sigma.rows() != spec.precision.rows() {
        return Err(shape("inverse_residual", spec.precision.rows(), spec.sigma.rows()));
    }
    let prod = spec.sigma.matmul(&spec.precision)?;
    let id = DenseMatrix::identity(spec.p);
    crate::linalg::mat_norm(&prod.sub(&id)?, crate::linalg::NormKind::EntrywiseMax)
}
