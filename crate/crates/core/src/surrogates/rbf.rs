use serde::{Deserialize, Serialize};

use super::{check_training_set, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::scalar::Real;

/// Exact interpolant `s(x) = Σⱼ wⱼ‖x − xⱼ‖ + c₀ + cᵀx`, with the side
/// conditions `Σ wⱼ = 0` and `Σ wⱼ xⱼ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RbfLinear<T: Real> {
    centers: Vec<Vec<T>>,
    #[serde(with = "crate::linalg::real_blob")]
    weights: Vec<T>,
    /// `[c₀, c₁, …, c_d]` of the affine tail.
    #[serde(with = "crate::linalg::real_blob")]
    tail: Vec<T>,
    standardizer: Standardizer<T>,
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Solves the augmented `[[A, P], [Pᵀ, 0]]` system for the interpolant.
pub fn rbf_linear_fit<T: Real>(inputs: &[Vec<T>], targets: &[T]) -> Result<RbfLinear<T>> {
    check_training_set(inputs, targets, 1)?;
    let n = inputs.len();
    let d = inputs[0].len();
    let size = n + d + 1;
    let standardizer = Standardizer::fit(targets);
    let mut system = Matrix::zeros(size, size);
    for i in 0..n {
        for j in 0..i {
            let r = distance(&inputs[i], &inputs[j]);
            system[(i, j)] = r;
            system[(j, i)] = r;
        }
        system[(i, n)] = T::one();
        system[(n, i)] = T::one();
        for (k, &x) in inputs[i].iter().enumerate() {
            system[(i, n + 1 + k)] = x;
            system[(n + 1 + k, i)] = x;
        }
    }
    let mut rhs = vec![T::zero(); size];
    for (r, &t) in rhs.iter_mut().zip(targets) {
        *r = standardizer.forward(t);
    }
    let lu = Lu::factor(&system, T::tol(1e-13)).map_err(|e| {
        Error::Numerical(format!(
            "RBF system is singular; the {n} nodes may be affinely degenerate in {d} dimensions ({e})"
        ))
    })?;
    let sol = lu.solve(&rhs);
    Ok(RbfLinear {
        centers: inputs.to_vec(),
        weights: sol[..n].to_vec(),
        tail: sol[n..].to_vec(),
        standardizer,
    })
}

impl<T: Real> RbfLinear<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let radial: T = self.centers.iter().zip(&self.weights).map(|(c, &w)| w * distance(x, c)).sum();
        let affine = self.tail[0] + x.iter().zip(&self.tail[1..]).map(|(&a, &b)| a * b).sum::<T>();
        self.standardizer.inverse(radial + affine)
    }

    pub fn dims(&self) -> usize {
        self.centers[0].len()
    }
}
