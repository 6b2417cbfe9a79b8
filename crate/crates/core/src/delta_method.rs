//! Rate transfer through a differentiable map.
//!
//! If `r_n |beta_hat - beta_0| = O_p(1)` and `f` is differentiable at
//! `beta_0` with Jacobian `J`, then:
//!
//! * regime A (`|J|` bounded away from zero): `f(beta_hat)` converges at
//!   `r_n / |J|`, which may be slower than `r_n` once `|J|` grows with `p`;
//! * regime B (`|J| -> 0`): `r_n |f(beta_hat) - f(beta_0)| = o_p(1)`, i.e.
//!   strictly faster than `r_n`, with no explicit rate.
//!
//! At finite scale the two regimes are told apart by the log-log slope of
//! measured Jacobian norms against the growing dimension.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::experiments::fit_loglog_slope;
use crate::linalg::{mat_norm, matvec, vec_norm, DenseMatrix, DenseVector, NormKind};

pub const DEFAULT_SLOPE_THRESHOLD: f64 = -0.1;

/// A map `f: R^p -> R^m`.
///
/// Implementations must be free of hidden mutable state: evaluators may be
/// called concurrently.
pub trait DifferentiableMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// May return non-finite values outside the domain.
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    /// Analytic Jacobian (`m x p`), if known.
    fn jacobian(&self, _x: &[f64]) -> Option<DenseMatrix> {
        None
    }
}

/// `f(beta) = D beta`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub matrix: DenseMatrix,
}

impl DifferentiableMap for LinearMap {
    fn input_dim(&self) -> usize {
        self.matrix.cols()
    }
    fn output_dim(&self) -> usize {
        self.matrix.rows()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.matrix.rows())
            .map(|i| self.matrix.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
    fn jacobian(&self, _x: &[f64]) -> Option<DenseMatrix> {
        Some(self.matrix.clone())
    }
}

/// `f(beta) = |beta|_2^2`, scalar output.
#[derive(Debug, Clone, Copy)]
pub struct SquaredNorm {
    pub dim: usize,
}

impl DifferentiableMap for SquaredNorm {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![x.iter().map(|v| v * v).sum()]
    }
    fn jacobian(&self, x: &[f64]) -> Option<DenseMatrix> {
        Some(DenseMatrix::from_vec_unchecked(1, x.len(), x.iter().map(|v| 2.0 * v).collect()))
    }
}

/// `f(v) = sqrt(v)` on a scalar; the variance-to-risk map.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquareRoot;

impl DifferentiableMap for SquareRoot {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].sqrt()]
    }
    fn jacobian(&self, x: &[f64]) -> Option<DenseMatrix> {
        let d = 0.5 / x[0].sqrt();
        d.is_finite().then(|| DenseMatrix::from_vec_unchecked(1, 1, vec![d]))
    }
}

/// Closure-backed map without an analytic Jacobian.
pub struct FnMap<F> {
    pub p: usize,
    pub m: usize,
    pub f: F,
}

impl<F> DifferentiableMap for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn input_dim(&self) -> usize {
        self.p
    }
    fn output_dim(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

fn eval_checked(map: &dyn DifferentiableMap, x: &[f64], coordinate: usize) -> Result<Vec<f64>> {
    let y = map.eval(x);
    if y.len() != map.output_dim() {
        return Err(shape("DifferentiableMap::eval", map.output_dim(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { coordinate });
    }
    Ok(y)
}

pub fn default_step(beta0: &DenseVector) -> f64 {
    1e-5 * (1.0 + vec_norm(beta0, NormKind::Linf).unwrap_or(0.0))
}

/// Central-difference Jacobian, column by column.
pub fn numeric_jacobian(map: &dyn DifferentiableMap, beta0: &DenseVector, step: f64) -> Result<DenseMatrix> {
    let p = map.input_dim();
    let m = map.output_dim();
    if beta0.dim() != p {
        return Err(shape("numeric_jacobian", p, beta0.dim()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut jac = DenseMatrix::zeros(m, p);
    let mut probe = beta0.as_slice().to_vec();
    for j in 0..p {
        let orig = probe[j];
        probe[j] = orig + step;
        let plus = eval_checked(map, &probe, j)?;
        probe[j] = orig - step;
        let minus = eval_checked(map, &probe, j)?;
        probe[j] = orig;
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Analytic Jacobian when the map provides one, central differences otherwise.
pub fn jacobian_at(map: &dyn DifferentiableMap, beta0: &DenseVector) -> Result<DenseMatrix> {
    if beta0.dim() != map.input_dim() {
        return Err(shape("jacobian_at", map.input_dim(), beta0.dim()));
    }
    match map.jacobian(beta0.as_slice()) {
        Some(j) if j.rows() == map.output_dim() && j.cols() == map.input_dim() => Ok(j),
        Some(j) => Err(shape(
            "DifferentiableMap::jacobian",
            format!("{}x{}", map.output_dim(), map.input_dim()),
            format!("{}x{}", j.rows(), j.cols()),
        )),
        None => numeric_jacobian(map, beta0, default_step(beta0)),
    }
}

pub fn jacobian_norm(map: &dyn DifferentiableMap, beta0: &DenseVector, kind: NormKind) -> Result<f64> {
    mat_norm(&jacobian_at(map, beta0)?, kind)
}

/// Normalized first-order remainder `|f(b0+h) - f(b0) - J h|_2 / |h|_2`.
pub fn linearization_residual(map: &dyn DifferentiableMap, beta0: &DenseVector, h: &DenseVector) -> Result<f64> {
    if h.dim() != map.input_dim() {
        return Err(shape("linearization_residual", map.input_dim(), h.dim()));
    }
    let h_norm = vec_norm(h, NormKind::L2)?;
    if h_norm == 0.0 {
        return Err(invalid("perturbation h must be nonzero"));
    }
    let jac = jacobian_at(map, beta0)?;
    let shifted = beta0.add(h)?;
    let f_shift = eval_checked(map, shifted.as_slice(), 0)?;
    let f_base = eval_checked(map, beta0.as_slice(), 0)?;
    let jh = matvec(&jac, h)?;
    let rem: Vec<f64> = (0..map.output_dim()).map(|i| f_shift[i] - f_base[i] - jh[i]).collect();
    Ok(crate::linalg::norms_l2(&rem) / h_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Jacobian norm bounded away from zero: rate `r_n / |J|`.
    A,
    /// Vanishing Jacobian norm: faster than `r_n`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransferredRate {
    Rate(f64),
    FasterThanRn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub r_n: f64,
    pub jacobian_norm: f64,
    pub regime: Regime,
    pub r_star: TransferredRate,
}

pub fn predict_rate(r_n: f64, jacobian_norm: f64, regime: Regime) -> Result<RatePrediction> {
    if !(r_n > 0.0 && r_n.is_finite()) {
        return Err(invalid("r_n must be positive and finite"));
    }
    if !(jacobian_norm >= 0.0 && jacobian_norm.is_finite()) {
        return Err(invalid("jacobian norm must be nonnegative and finite"));
    }
    let r_star = match regime {
        Regime::A if jacobian_norm == 0.0 => {
            return Err(invalid("regime A requires a positive Jacobian norm"));
        }
        Regime::A => TransferredRate::Rate(r_n / jacobian_norm),
        Regime::B => TransferredRate::FasterThanRn,
    };
    Ok(RatePrediction {
        r_n,
        jacobian_norm,
        regime,
        r_star,
    })
}

/// Jacobian norms measured along a growing dimension (`p`, or the sparsity
/// level when that is what diverges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEvidence {
    dims: Vec<f64>,
    norms: Vec<f64>,
}

impl RegimeEvidence {
    pub fn new(dims: Vec<f64>, norms: Vec<f64>) -> Result<Self> {
        if dims.len() != norms.len() {
            return Err(shape("RegimeEvidence", dims.len(), norms.len()));
        }
        if dims.windows(2).any(|w| !(w[0] < w[1])) || dims.iter().any(|d| !(*d > 0.0)) {
            return Err(invalid("dims must be positive and strictly increasing"));
        }
        if norms.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(invalid("norms must be positive and finite"));
        }
        Ok(Self { dims, norms })
    }

    pub fn dims(&self) -> &[f64] {
        &self.dims
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn slope(&self) -> Result<f64> {
        Ok(fit_loglog_slope(&self.dims, &self.norms)?.slope)
    }
}

pub fn classify_regime(evidence: &RegimeEvidence, slope_threshold: f64) -> Result<Regime> {
    if evidence.dims.len() < 3 {
        return Err(Error::InsufficientEvidence {
            needed: 3,
            got: evidence.dims.len(),
        });
    }
    if !(slope_threshold < 0.0) {
        return Err(invalid("slope threshold must be negative"));
    }
    Ok(if evidence.slope()? < slope_threshold {
        Regime::B
    } else {
        Regime::A
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn sample_d() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, -1.0, 0.0, 2.0], vec![0.5, 0.0, 3.0, -1.0]]).unwrap()
    }

    #[test]
    fn numeric_jacobian_of_linear_map() {
        let map = FnMap {
            p: 4,
            m: 2,
            f: |x: &[f64]| LinearMap { matrix: sample_d() }.eval(x),
        };
        let j = numeric_jacobian(&map, &v(&[0.3, -2.0, 1.0, 5.0]), 1e-5).unwrap();
        let d = sample_d();
        for (a, b) in j.as_slice().iter().zip(d.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn numeric_jacobian_examples() {
        let j = numeric_jacobian(&SquaredNorm { dim: 2 }, &v(&[1.0, 2.0]), 1e-5).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-8 && (j[(0, 1)] - 4.0).abs() < 1e-8);
        let j = numeric_jacobian(&SquareRoot, &v(&[4.0]), 1e-6).unwrap();
        assert!((j[(0, 0)] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn numeric_jacobian_reports_offending_coordinate() {
        let map = FnMap {
            p: 3,
            m: 1,
            f: |x: &[f64]| vec![x[0] + x[2].ln()],
        };
        let err = numeric_jacobian(&map, &v(&[1.0, 1.0, 5e-4]), 1e-3).unwrap_err();
        assert!(matches!(err, Error::Evaluation { coordinate: 2 }));
    }

    #[test]
    fn residual_examples() {
        let lin = LinearMap { matrix: sample_d() };
        let r = linearization_residual(&lin, &v(&[1.0, 2.0, 3.0, 4.0]), &v(&[0.5, -0.1, 2.0, 7.0])).unwrap();
        assert!(r < 1e-12);

        let sq = SquaredNorm { dim: 2 };
        for t in [1e-1, 1e-2, 1e-3] {
            let r = linearization_residual(&sq, &v(&[1.0, 1.0]), &v(&[t, 0.0])).unwrap();
            assert!((r - t).abs() < 1e-12 * (1.0 + t), "t={t} r={r}");
        }

        let r = linearization_residual(&SquareRoot, &v(&[1.0]), &v(&[-1.0])).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residual_rejects_zero_h() {
        let sq = SquaredNorm { dim: 2 };
        assert!(matches!(
            linearization_residual(&sq, &v(&[1.0, 1.0]), &DenseVector::zeros(2)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn predict_rate_examples() {
        let a = predict_rate(10.0, 2.0, Regime::A).unwrap();
        assert_eq!(a.r_star, TransferredRate::Rate(5.0));
        let a = predict_rate(10.0, 1.0, Regime::A).unwrap();
        assert_eq!(a.r_star, TransferredRate::Rate(10.0));
        let b = predict_rate(10.0, 0.01, Regime::B).unwrap();
        assert_eq!(b.r_star, TransferredRate::FasterThanRn);
        assert!(predict_rate(10.0, 0.0, Regime::A).is_err());
    }

    #[test]
    fn classify_examples() {
        let dims = vec![100.0, 200.0, 400.0];
        let vanishing: Vec<f64> = dims.iter().map(|p: &f64| p.powf(-0.3)).collect();
        let ev = RegimeEvidence::new(dims.clone(), vanishing).unwrap();
        assert_eq!(classify_regime(&ev, DEFAULT_SLOPE_THRESHOLD).unwrap(), Regime::B);

        let ev = RegimeEvidence::new(dims.clone(), vec![3.0; 3]).unwrap();
        assert_eq!(classify_regime(&ev, DEFAULT_SLOPE_THRESHOLD).unwrap(), Regime::A);

        // restriction rows with fixed s0 = 5: |D|_F = sqrt(5) at every p
        let norms: Vec<f64> = dims
            .iter()
            .map(|&p| {
                let d = DenseMatrix::from_fn(1, p as usize, |_, j| if j < 5 { 1.0 } else { 0.0 }).unwrap();
                mat_norm(&d, NormKind::Frobenius).unwrap()
            })
            .collect();
        let ev = RegimeEvidence::new(dims, norms).unwrap();
        assert_eq!(classify_regime(&ev, DEFAULT_SLOPE_THRESHOLD).unwrap(), Regime::A);
    }

    #[test]
    fn classify_needs_three_points() {
        let ev = RegimeEvidence::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            classify_regime(&ev, DEFAULT_SLOPE_THRESHOLD),
            Err(Error::InsufficientEvidence { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn evidence_validation() {
        assert!(RegimeEvidence::new(vec![2.0, 1.0, 3.0], vec![1.0; 3]).is_err());
        assert!(RegimeEvidence::new(vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn tall_maps_are_supported() {
        // m > p
        let d = DenseMatrix::from_fn(6, 3, |i, j| (i + 2 * j) as f64).unwrap();
        let map = LinearMap { matrix: d.clone() };
        let j = jacobian_at(&map, &v(&[1.0, 0.0, -1.0])).unwrap();
        assert_eq!((j.rows(), j.cols()), (6, 3));
        let nj = numeric_jacobian(&map, &v(&[1.0, 0.0, -1.0]), 1e-5).unwrap();
        assert!(nj.sub(&d).unwrap().as_slice().iter().all(|e| e.abs() < 1e-8));
    }
}
