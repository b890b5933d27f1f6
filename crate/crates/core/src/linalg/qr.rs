use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Householder QR of a tall design matrix, used for linear least squares.
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: Matrix<T>,
    r_diag: Vec<T>,
}

impl<T: Real> LeastSquares<T> {
    /// Factors `a` (m×n, m ≥ n). Rank deficiency below `rel_tol` is an error.
    pub fn factor(a: &Matrix<T>, rel_tol: T) -> Result<Self> {
        let (m, n) = (a.nrows(), a.ncols());
        if m < n {
            return Err(Error::Config(format!(
                "underdetermined least squares: {m} equations for {n} unknowns"
            )));
        }
        let mut qr = a.clone();
        let mut r_diag = vec![T::zero(); n];
        for k in 0..n {
            let norm = (k..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum::<T>().sqrt();
            if norm > T::zero() {
                let norm = if qr[(k, k)] < T::zero() { -norm } else { norm };
                for i in k..m {
                    qr[(i, k)] /= norm;
                }
                qr[(k, k)] += T::one();
                for j in (k + 1)..n {
                    let s = (k..m).map(|i| qr[(i, k)] * qr[(i, j)]).sum::<T>() / qr[(k, k)];
                    for i in k..m {
                        let v = qr[(i, k)];
                        qr[(i, j)] -= s * v;
                    }
                }
                r_diag[k] = -norm;
            }
        }
        let scale = r_diag.iter().fold(T::zero(), |mx, v| mx.max(v.abs()));
        if let Some(k) = r_diag.iter().position(|v| !(v.abs() > rel_tol * scale)) {
            return Err(Error::Numerical(format!(
                "rank-deficient least-squares design (column {k} of {n})"
            )));
        }
        Ok(Self { qr, r_diag })
    }

    /// Minimizes `‖A·x − b‖₂`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (m, n) = (self.qr.nrows(), self.qr.ncols());
        assert_eq!(b.len(), m);
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in (k + 1)..n {
                s -= self.qr[(k, j)] * x[j];
            }
            x[k] = s / self.r_diag[k];
        }
        x
    }

    fn apply_qt(&self, y: &mut [T]) {
        let (m, n) = (self.qr.nrows(), self.qr.ncols());
        for k in 0..n {
            if self.qr[(k, k)] == T::zero() {
                continue;
            }
            let s = (k..m).map(|i| self.qr[(i, k)] * y[i]).sum::<T>() / self.qr[(k, k)];
            for i in k..m {
                y[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Diagonal of the hat matrix `A(AᵀA)⁻¹Aᵀ` (statistical leverages).
    pub fn leverages(&self) -> Vec<T> {
        let (m, n) = (self.qr.nrows(), self.qr.ncols());
        // Row i of the thin Q is Qᵀeᵢ restricted to the first n entries.
        (0..m)
            .map(|i| {
                let mut e = vec![T::zero(); m];
                e[i] = T::one();
                self.apply_qt(&mut e);
                e[..n].iter().map(|&v| v * v).sum()
            })
            .collect()
    }
}
