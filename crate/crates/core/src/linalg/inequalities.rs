//! Randomized checks of the norm inequalities that drive the rate-transfer
//! bound: `|Ax|_2 <= |A|_F |x|_2`, `|Ax|_1 <= |A|_colsum |x|_1`,
//! `|Ax|_inf <= |A|_rowsum |x|_inf`, and `|w'Aw| <= |w|_1^2 max|a_ij|`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{mat_norm, matvec, quad_form, vec_norm, DenseMatrix, DenseVector, NormKind};
use crate::data_gen::{normal_vec, Seed};
use crate::error::{invalid, Result};

pub const DEFAULT_RELATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityFamily {
    /// `|Ax|_2 <= |A|_F |x|_2`
    Frobenius,
    /// `|Ax|_1 <= max column sum * |x|_1`
    MaxColSum,
    /// `|Ax|_inf <= max row sum * |x|_inf`
    MaxRowSum,
    /// `|w'Aw| <= |w|_1^2 * max |a_ij|`
    Holder,
}

impl InequalityFamily {
    pub const ALL: [InequalityFamily; 4] = [
        InequalityFamily::Frobenius,
        InequalityFamily::MaxColSum,
        InequalityFamily::MaxRowSum,
        InequalityFamily::Holder,
    ];
}

/// Left and right side of one inequality instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sides {
    pub lhs: f64,
    pub rhs: f64,
}

impl Sides {
    pub fn holds(&self, rel_slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_slack)
    }
}

pub fn operator_sides(family: InequalityFamily, a: &DenseMatrix, x: &DenseVector) -> Result<Sides> {
    let (vk, mk) = match family {
        InequalityFamily::Frobenius => (NormKind::L2, NormKind::Frobenius),
        InequalityFamily::MaxColSum => (NormKind::L1, NormKind::MaxColSum),
        InequalityFamily::MaxRowSum => (NormKind::Linf, NormKind::MaxRowSum),
        InequalityFamily::Holder => return holder_sides(a, x),
    };
    let ax = matvec(a, x)?;
    Ok(Sides {
        lhs: vec_norm(&ax, vk)?,
        rhs: mat_norm(a, mk)? * vec_norm(x, vk)?,
    })
}

pub fn holder_sides(a: &DenseMatrix, w: &DenseVector) -> Result<Sides> {
    let l1 = vec_norm(w, NormKind::L1)?;
    Ok(Sides {
        lhs: quad_form(w, a)?.abs(),
        rhs: l1 * l1 * mat_norm(a, NormKind::EntrywiseMax)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub family: InequalityFamily,
    pub lhs: f64,
    pub rhs: f64,
    pub matrix: DenseMatrix,
    pub vector: DenseVector,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InequalityReport {
    pub trials: usize,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    // mix magnitudes so the relative slack is exercised across scales
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let data = normal_vec(rng, rows * cols).into_iter().map(|v| v * scale).collect();
    DenseMatrix::from_vec_unchecked(rows, cols, data)
}

fn random_vector(rng: &mut impl Rng, dim: usize) -> DenseVector {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    DenseVector::from_vec_unchecked(normal_vec(rng, dim).into_iter().map(|v| v * scale).collect())
}

/// Runs `trials` random instances of all four inequality families with
/// dimensions drawn uniformly from `1..=max_dim`.
pub fn run_inequality_suite(trials: usize, max_dim: usize, seed: Seed, rel_slack: f64) -> Result<InequalityReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if max_dim == 0 {
        return Err(invalid("max_dim must be at least 1"));
    }
    let mut report = InequalityReport {
        trials,
        ..Default::default()
    };
    for trial in 0..trials {
        let mut rng = seed.substream("norm-inequalities", &[trial as u64]);
        let m = rng.random_range(1..=max_dim);
        let p = rng.random_range(1..=max_dim);
        let a = random_matrix(&mut rng, m, p);
        let x = random_vector(&mut rng, p);

        let k = rng.random_range(1..=max_dim);
        let half = random_matrix(&mut rng, k, k);
        let sym = DenseMatrix::from_fn(k, k, |i, j| 0.5 * (half[(i, j)] + half[(j, i)]))?;
        let w = random_vector(&mut rng, k);

        for family in InequalityFamily::ALL {
            let (mat, vec) = match family {
                InequalityFamily::Holder => (&sym, &w),
                _ => (&a, &x),
            };
            let sides = operator_sides(family, mat, vec)?;
            report.checks += 1;
            if !sides.holds(rel_slack) {
                report.violations.push(Violation {
                    trial,
                    family,
                    lhs: sides.lhs,
                    rhs: sides.rhs,
                    matrix: mat.clone(),
                    vector: vec.clone(),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case_is_equality() {
        let a = DenseMatrix::new(1, 1, vec![-3.5]).unwrap();
        let x = DenseVector::new(vec![2.25]).unwrap();
        for family in InequalityFamily::ALL {
            let s = operator_sides(family, &a, &x).unwrap();
            assert_eq!(s.lhs, s.rhs, "{family:?}");
        }
    }

    #[test]
    fn small_suite_passes() {
        let r = run_inequality_suite(300, 20, Seed(7), DEFAULT_RELATIVE_SLACK).unwrap();
        assert_eq!(r.checks, 1200);
        assert!(r.passed(), "{:?}", r.violations.first());
    }

    #[test]
    fn single_trial_unit_dim() {
        let r = run_inequality_suite(1, 1, Seed(3), DEFAULT_RELATIVE_SLACK).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_inequality_suite(0, 5, Seed(1), DEFAULT_RELATIVE_SLACK).is_err());
    }

    #[test]
    fn violation_is_detected() {
        let s = Sides { lhs: 1.0 + 1e-9, rhs: 1.0 };
        assert!(!s.holds(DEFAULT_RELATIVE_SLACK));
    }
}
