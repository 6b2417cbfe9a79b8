use serde::{Deserialize, Serialize};

use super::{DenseMatrix, DenseVector};
use crate::error::{invalid, Result};

/// Vector norms (`L1`, `L2`, `Linf`) and matrix norms.
///
/// `MaxRowSum` is the operator norm induced by the sup-norm, while
/// `EntrywiseMax` is the largest absolute entry. Both are written with the
/// same symbol in the literature on covariance estimation, so they are kept
/// as separate tags here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    Frobenius,
    MaxColSum,
    MaxRowSum,
    EntrywiseMax,
}

impl NormKind {
    pub fn is_vector_norm(self) -> bool {
        matches!(self, NormKind::L1 | NormKind::L2 | NormKind::Linf)
    }

    pub fn is_matrix_norm(self) -> bool {
        !self.is_vector_norm()
    }
}

pub fn vec_norm(x: &DenseVector, kind: NormKind) -> Result<f64> {
    let x = x.as_slice();
    match kind {
        NormKind::L1 => Ok(x.iter().map(|v| v.abs()).sum()),
        NormKind::L2 => Ok(l2(x)),
        NormKind::Linf => Ok(x.iter().fold(0.0, |m, v| f64::max(m, v.abs()))),
        other => Err(invalid(format!("{other:?} is not a vector norm"))),
    }
}

/// Euclidean norm with scaling so squares of large entries do not overflow.
pub(crate) fn l2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = x.iter().map(|v| (v / scale).powi(2)).sum();
    scale * ss.sqrt()
}

pub fn mat_norm(a: &DenseMatrix, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Frobenius => Ok(l2(a.as_slice())),
        NormKind::MaxColSum => {
            let mut sums = vec![0.0; a.cols()];
            for i in 0..a.rows() {
                for (s, v) in sums.iter_mut().zip(a.row(i)) {
                    *s += v.abs();
                }
            }
            Ok(sums.into_iter().fold(0.0, f64::max))
        }
        NormKind::MaxRowSum => Ok((0..a.rows())
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)),
        NormKind::EntrywiseMax => Ok(a.as_slice().iter().fold(0.0, |m, v| f64::max(m, v.abs()))),
        other => Err(invalid(format!("{other:?} is not a matrix norm"))),
    }
}
