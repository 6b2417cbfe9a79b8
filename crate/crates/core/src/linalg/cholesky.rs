use super::{dot, DenseMatrix, DenseVector};
use crate::error::{invalid, shape, Error, Result};

const PIVOT_REL_TOL: f64 = 1e-12;
const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(shape("cholesky", "square matrix", format!("{}x{}", a.rows(), a.cols())));
        }
        if a.relative_asymmetry() > SYMMETRY_REL_TOL {
            return Err(invalid(format!(
                "matrix is not symmetric (relative asymmetry {:e})",
                a.relative_asymmetry()
            )));
        }
        let n = a.rows();
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let floor = PIVOT_REL_TOL * max_diag.max(f64::MIN_POSITIVE);
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let (done, rest) = l.data.split_at_mut(j * n);
            let row_j = &mut rest[..n];
            for k in 0..j {
                let row_k = &done[k * n..k * n + n];
                row_j[k] = (a[(j, k)] - dot(&row_j[..k], &row_k[..k])) / row_k[k];
            }
            let pivot = a[(j, j)] - dot(&row_j[..j], &row_j[..j]);
            if !(pivot > floor) {
                return Err(Error::NotSpd { index: j, pivot });
            }
            row_j[j] = pivot.sqrt();
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector> {
        let n = self.dim();
        if b.dim() != n {
            return Err(shape("cholesky solve", n, b.dim()));
        }
        let l = &self.lower;
        let mut y = b.as_slice().to_vec();
        for i in 0..n {
            let row = l.row(i);
            y[i] = (y[i] - dot(&row[..i], &y[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(DenseVector::from_vec_unchecked(y))
    }

    /// `A^{-1}` via `n` solves against identity columns, symmetrized.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let col = self.solve(&DenseVector::basis(n, j)).expect("dimension checked");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        inv
    }
}

pub fn solve_spd(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    Cholesky::factor(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matvec, vec_norm, NormKind};

    #[test]
    fn identity_solve() {
        let b = DenseVector::new(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(solve_spd(&DenseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = DenseMatrix::diag(&[2.0, 1.0]).unwrap();
        let x = solve_spd(&a, &DenseVector::ones(2)).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let err = solve_spd(&a, &DenseVector::ones(2)).unwrap_err();
        assert!(matches!(err, Error::NotSpd { index: 1, .. }));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(solve_spd(&a, &DenseVector::ones(2)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn residual_is_small_on_dense_spd() {
        let n = 30;
        let b_mat = DenseMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5).unwrap();
        let mut a = b_mat.transpose().matmul(&b_mat).unwrap();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let b = DenseVector::new((0..n).map(|i| (i as f64).sin()).collect()).unwrap();
        let x = solve_spd(&a, &b).unwrap();
        let r = matvec(&a, &x).unwrap().sub(&b).unwrap();
        let bn = vec_norm(&b, NormKind::L2).unwrap();
        assert!(vec_norm(&r, NormKind::L2).unwrap() <= 1e-10 * (1.0 + bn));

        let inv = Cholesky::factor(&a).unwrap().inverse();
        let prod = a.matmul(&inv).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }
}
