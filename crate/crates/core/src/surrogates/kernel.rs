use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Stationary correlation families `R(h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Exponential,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [Self::Gaussian, Self::Exponential, Self::Matern32, Self::Matern52];

    /// Correlation at scaled distance `h ≥ 0`.
    #[inline]
    pub fn correlation<T: Real>(self, h: T) -> T {
        match self {
            Self::Gaussian => (-h * h).exp(),
            Self::Exponential => (-h).exp(),
            Self::Matern32 => {
                let s = T::of(3.0).sqrt() * h;
                (T::one() + s) * (-s).exp()
            }
            Self::Matern52 => {
                let s = T::of(5.0).sqrt() * h;
                (T::one() + s + T::of(5.0 / 3.0) * h * h) * (-s).exp()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Exponential => "exponential",
            Self::Matern32 => "matern32",
            Self::Matern52 => "matern52",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown kernel family `{s}` (gaussian, exponential, matern32, matern52)")))
    }
}

/// Kernel family with per-dimension lengthscales, process variance and nugget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KernelSpec<T: Real> {
    pub family: KernelFamily,
    pub lengthscales: Vec<T>,
    pub variance: T,
    pub nugget: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(family: KernelFamily, lengthscales: Vec<T>, variance: T, nugget: T) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&t| !(t > T::zero() && t.is_finite())) {
            return Err(Error::Config("kernel lengthscales must be positive and finite".into()));
        }
        if !(variance > T::zero()) {
            return Err(Error::Config(format!("kernel variance must be positive, got {variance}")));
        }
        if !(nugget >= T::zero()) {
            return Err(Error::Config(format!("kernel nugget must be nonnegative, got {nugget}")));
        }
        Ok(Self { family, lengthscales, variance, nugget })
    }

    /// Correlation `R(h)` at `h = √Σ((xᵢ − yᵢ)/θᵢ)²`.
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        kernel_eval(self.family, &self.lengthscales, x, y)
    }

    /// `σ²·(R + nugget·I)` over a point set.
    pub fn gram(&self, points: &[Vec<T>]) -> Matrix<T> {
        let mut g = correlation_matrix(self.family, &self.lengthscales, points, self.nugget);
        g.scale(self.variance);
        g
    }
}

/// Scaled distance `h` between two points.
#[inline]
pub fn scaled_distance<T: Real>(lengthscales: &[T], x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((&a, &b), &t)| {
            let d = (a - b) / t;
            d * d
        })
        .sum::<T>()
        .sqrt()
}

#[inline]
pub fn kernel_eval<T: Real>(family: KernelFamily, lengthscales: &[T], x: &[T], y: &[T]) -> T {
    family.correlation(scaled_distance(lengthscales, x, y))
}

/// Correlation matrix with `nugget` added to the diagonal.
pub fn correlation_matrix<T: Real>(family: KernelFamily, lengthscales: &[T], points: &[Vec<T>], nugget: T) -> Matrix<T> {
    let n = points.len();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = T::one() + nugget;
        for j in 0..i {
            let v = kernel_eval(family, lengthscales, &points[i], &points[j]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_correlation_at_zero_distance() {
        let x = [0.3, -1.2];
        for f in KernelFamily::ALL {
            assert_eq!(kernel_eval(f, &[0.7, 2.0], &x, &x), 1.0);
        }
    }

    #[test]
    fn gaussian_at_unit_distance() {
        let k = kernel_eval(KernelFamily::Gaussian, &[1.0, 1.0], &[0.0, 0.0], &[0.6, 0.8]);
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn family_formulas() {
        let h: f64 = 0.8;
        let s3 = 3f64.sqrt() * h;
        let s5 = 5f64.sqrt() * h;
        assert_eq!(KernelFamily::Exponential.correlation(h), (-h).exp());
        assert!((KernelFamily::Matern32.correlation(h) - (1.0 + s3) * (-s3).exp()).abs() < 1e-15);
        assert!((KernelFamily::Matern52.correlation(h) - (1.0 + s5 + 5.0 * h * h / 3.0) * (-s5).exp()).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(KernelFamily::Gaussian, vec![1.0, 0.0], 1.0, 0.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Gaussian, vec![1.0], -1.0, 0.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Gaussian, vec![1.0], 1.0, -1e-3).is_err());
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.5f64], 2.0, 0.1).unwrap();
        let g = k.gram(&[vec![0.0], vec![1.0]]);
        assert!((g[(0, 0)] - 2.2).abs() < 1e-15);
        assert_eq!("Matern32".parse::<KernelFamily>().unwrap(), KernelFamily::Matern32);
        assert!("cubic".parse::<KernelFamily>().is_err());
    }
}
