use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular factor `L` with `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Data(format!("cholesky of non-square {}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `L·y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.l.nrows()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// Squared ratio of extreme pivots, a cheap lower bound on the 2-norm
    /// condition number.
    pub fn condition_estimate(&self) -> T {
        let diag: Vec<T> = (0..self.l.nrows()).map(|i| self.l[(i, i)]).collect();
        let max = diag.iter().fold(T::zero(), |m, &v| m.max(v));
        let min = diag.iter().fold(T::infinity(), |m, &v| m.min(v));
        (max / min).powi(2)
    }
}
