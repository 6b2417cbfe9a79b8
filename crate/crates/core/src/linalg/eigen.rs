use super::norms::l2;
use super::{dot, DenseMatrix};
use crate::error::{invalid, shape, Error, Result};

pub const POWER_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBounds {
    pub min: f64,
    pub max: f64,
}

/// Gershgorin enclosure `[min_i (a_ii - r_i), max_i (a_ii + r_i)]` of the spectrum.
pub fn gershgorin_bounds(a: &DenseMatrix) -> EigenBounds {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.rows() {
        let row = a.row(i);
        let radius: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
        lo = lo.min(row[i] - radius);
        hi = hi.max(row[i] + radius);
    }
    EigenBounds { min: lo, max: hi }
}

/// Deterministic start vector: ones perturbed by a golden-ratio sequence so it
/// is not orthogonal to structured eigenvectors (the all-ones direction is an
/// exact eigenvector of many banded Toeplitz matrices).
fn start_vector(n: usize) -> Vec<f64> {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let v: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64 + 1.0) * PHI).fract()).collect();
    let norm = l2(&v);
    v.into_iter().map(|x| x / norm).collect()
}

/// Dominant eigenvalue of `shift * I + sign * A`, assumed PSD.
fn power_dominant(a: &DenseMatrix, shift: f64, sign: f64, tol: f64, scale: f64) -> Result<f64> {
    let n = a.rows();
    let mut x = start_vector(n);
    let mut y = vec![0.0; n];
    let mut previous = f64::NAN;
    for iteration in 1..=POWER_MAX_ITERATIONS {
        for i in 0..n {
            y[i] = shift * x[i] + sign * dot(a.row(i), &x);
        }
        // x is unit length so x'y is the Rayleigh quotient
        let rayleigh = dot(&x, &y);
        let norm = l2(&y);
        if norm == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - previous).abs() <= tol * scale {
            return Ok(rayleigh);
        }
        previous = rayleigh;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if iteration == POWER_MAX_ITERATIONS {
            return Err(Error::Convergence {
                what: "power iteration",
                iterations: iteration,
                diagnostic: format!("last Rayleigh quotient {rayleigh:e}, shift {shift:e}"),
            });
        }
    }
    unreachable!("loop returns on the final iteration")
}

/// Smallest and largest eigenvalue of a symmetric matrix by power iteration.
///
/// The maximum comes from power iteration on `A - lo * I` with `lo` the
/// Gershgorin lower bound; the minimum from power iteration on
/// `max * I - A`. Iteration stops once successive Rayleigh quotients move
/// by less than `tol` relative to the spectral scale.
pub fn extreme_eigenvalues(a: &DenseMatrix, tol: f64) -> Result<EigenBounds> {
    if !a.is_square() {
        return Err(shape("extreme_eigenvalues", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if a.relative_asymmetry() > 1e-10 {
        return Err(invalid("extreme_eigenvalues requires a symmetric matrix"));
    }
    let disc = gershgorin_bounds(a);
    let scale = disc.min.abs().max(disc.max.abs()).max(f64::MIN_POSITIVE);
    // A - lo*I is PSD and has the same top eigenvector; removing lo speeds
    // convergence when the spectrum sits far from zero.
    let lift = -disc.min;
    let max = power_dominant(a, lift, 1.0, tol, scale)? - lift;
    let gap = power_dominant(a, max, -1.0, tol, scale)?;
    Ok(EigenBounds { min: max - gap, max })
}
