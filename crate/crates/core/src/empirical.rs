//! Discrete Karhunen–Loève decomposition of frozen-seed trajectory data.
//!
//! Conventions: the covariance uses the `1/N` normalization, so the
//! projected random variables `ξ̂` have exactly unit sample variance and are
//! exactly uncorrelated; eigenvectors are unit-norm in `ℝᴹ` and oriented so
//! their largest-magnitude entry is positive.

use serde::{Deserialize, Serialize};

use crate::design::SeedRegistry;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::{cast, Real};

/// Tag recorded with every serialized basis.
pub const COV_NORM: &str = "1/N";

/// Eigenvalues at or below this fraction of the largest are null modes.
pub const NULL_MODE_RATIO: f64 = 1e-12;

/// Simulator outputs on a design: row `j` holds `H(x⁽ʲ⁾, ω_k)` for every seed `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrajectoryMatrix<T: Real> {
    values: Matrix<T>,
    coords: Vec<Vec<T>>,
    seeds: SeedRegistry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    simulator: Option<String>,
}

impl<T: Real> TrajectoryMatrix<T> {
    pub fn new(values: Matrix<T>, coords: Vec<Vec<T>>, seeds: SeedRegistry) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Data("trajectory matrix is empty".into()));
        }
        if coords.len() != values.nrows() {
            return Err(Error::Data(format!(
                "{} design points for {} trajectory rows",
                coords.len(),
                values.nrows()
            )));
        }
        if seeds.len() != values.ncols() {
            return Err(Error::Data(format!("{} seeds for {} trajectory columns", seeds.len(), values.ncols())));
        }
        let d = coords[0].len();
        if d == 0 || coords.iter().any(|c| c.len() != d) {
            return Err(Error::Data("design points must share a nonzero dimension".into()));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let n = values.ncols();
            return Err(Error::Data(format!("non-finite value at ({}, {})", pos / n, pos % n)));
        }
        Ok(Self { values, coords, seeds, simulator: None })
    }

    pub fn with_simulator(mut self, id: &str) -> Self {
        self.simulator = Some(id.to_owned());
        self
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn coords(&self) -> &[Vec<T>] {
        &self.coords
    }

    pub fn seeds(&self) -> &SeedRegistry {
        &self.seeds
    }

    pub fn simulator(&self) -> Option<&str> {
        self.simulator.as_deref()
    }

    /// Number of design points `M`.
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    /// Number of trajectories `N`.
    pub fn n_seeds(&self) -> usize {
        self.values.ncols()
    }

    pub fn dims(&self) -> usize {
        self.coords[0].len()
    }

    /// Sub-design made of the listed rows, in that order.
    pub fn select_points(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Data("selection of zero design points".into()));
        }
        Ok(Self {
            values: self.values.select_rows(idx),
            coords: idx.iter().map(|&i| self.coords[i].clone()).collect(),
            seeds: self.seeds.clone(),
            simulator: self.simulator.clone(),
        })
    }
}

/// Trajectories with the per-point sample mean removed.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredData<T: Real> {
    pub centered: Matrix<T>,
    pub mean: Vec<T>,
}

/// Removes the empirical mean over seeds from every design point.
pub fn center<T: Real>(data: &TrajectoryMatrix<T>) -> Result<CenteredData<T>> {
    let n = data.n_seeds();
    if n < 2 {
        return Err(Error::Data(format!("centering needs at least 2 trajectories, got {n}")));
    }
    let values = data.values();
    if !values.is_finite() {
        return Err(Error::Data("trajectory matrix has non-finite values".into()));
    }
    let inv_n = T::one() / cast::<T>(n);
    let mut centered = values.clone();
    let mut mean = Vec::with_capacity(values.nrows());
    for j in 0..values.nrows() {
        let m = values.row(j).iter().copied().sum::<T>() * inv_n;
        centered.row_mut(j).iter_mut().for_each(|v| *v -= m);
        mean.push(m);
    }
    Ok(CenteredData { centered, mean })
}

/// `C = (1/N)·Hc·Hcᵀ`.
pub fn empirical_covariance<T: Real>(cd: &CenteredData<T>) -> Matrix<T> {
    let mut c = cd.centered.gram_rows();
    c.scale(T::one() / cast::<T>(cd.centered.ncols()));
    c
}

/// Eigenpairs sorted by nonincreasing eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Spectrum<T: Real> {
    #[serde(with = "crate::linalg::real_blob")]
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Eigendecomposition of an empirical (positive semidefinite) covariance.
///
/// Negative eigenvalues down to `−1e-10·‖C‖` are rounding noise and clamped
/// to zero; anything more negative is an error.
pub fn eigendecompose<T: Real>(c: &Matrix<T>) -> Result<Spectrum<T>> {
    let (spectrum, most_negative, _) = decompose_sorted(c)?;
    let limit = T::tol(1e-10) * c.frobenius_norm();
    if most_negative < -limit {
        return Err(Error::Numerical(format!(
            "covariance is indefinite: eigenvalue {most_negative:e} below -{limit:e}"
        )));
    }
    Ok(spectrum)
}

/// Like [`eigendecompose`] but clamps every negative eigenvalue to zero and
/// reports how many were clamped; used for surrogate covariances, which
/// need not be positive semidefinite.
pub fn eigendecompose_clamped<T: Real>(c: &Matrix<T>) -> Result<(Spectrum<T>, usize)> {
    let (spectrum, _, clamped) = decompose_sorted(c)?;
    Ok((spectrum, clamped))
}

/// Sorted, oriented spectrum with negatives zeroed, plus the most negative
/// raw eigenvalue and the count of negative ones.
fn decompose_sorted<T: Real>(c: &Matrix<T>) -> Result<(Spectrum<T>, T, usize)> {
    if !c.is_square() {
        return Err(Error::Data(format!("covariance must be square, got {}x{}", c.nrows(), c.ncols())));
    }
    let scale = c.max_abs();
    let asym = c.asymmetry();
    if asym > T::tol(1e-10) * scale {
        return Err(Error::Data(format!("matrix is not symmetric (max |C - Cᵀ| = {asym:e})")));
    }
    let eig = symmetric_eigen(c)?;
    let n = eig.values.len();
    let most_negative = eig.values.first().copied().unwrap_or_else(T::zero).min(T::zero());
    let negatives = eig.values.iter().filter(|&&v| v < T::zero()).count();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, src) in (0..n).rev().enumerate() {
        values.push(eig.values[src].max(T::zero()));
        let mut col = eig.vectors.col(src);
        orient(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            vectors[(i, dst)] = v;
        }
    }
    Ok((Spectrum { values, vectors }, most_negative, negatives))
}

/// Flips `v` so its largest-magnitude entry is positive. Entries within
/// relative 1e-12 of the maximum count as ties, resolved to the lowest index.
fn orient<T: Real>(v: &mut [T]) {
    let max = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if max == T::zero() {
        return;
    }
    let cutoff = max * (T::one() - T::tol(1e-12));
    let lead = v.iter().position(|x| x.abs() >= cutoff).expect("maximum exists");
    if v[lead] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// True for eigenvalues treated as null relative to the leading one.
pub fn is_null_mode<T: Real>(lambda: T, lambda_max: T) -> bool {
    !(lambda > T::tol(NULL_MODE_RATIO) * lambda_max) || !(lambda_max > T::zero())
}

/// `ξ̂_i(ω_k) = λ_i^{-1/2} Σ_j Hc(x⁽ʲ⁾, ω_k) φ_i(x⁽ʲ⁾)`; null modes get `ξ̂ ≡ 0`.
/// Returns a `modes × N` matrix.
pub fn project_xi<T: Real>(cd: &CenteredData<T>, spectrum: &Spectrum<T>) -> Matrix<T> {
    let (m, n) = (cd.centered.nrows(), cd.centered.ncols());
    let modes = spectrum.values.len();
    assert_eq!(spectrum.vectors.nrows(), m, "eigenvectors must span the design points");
    let lambda_max = spectrum.values.first().copied().unwrap_or_else(T::zero);
    let mut xi = Matrix::zeros(modes, n);
    for i in 0..modes {
        let lambda = spectrum.values[i];
        if is_null_mode(lambda, lambda_max) {
            continue;
        }
        let inv_sqrt = T::one() / lambda.sqrt();
        for j in 0..m {
            let phi = spectrum.vectors[(j, i)] * inv_sqrt;
            if phi == T::zero() {
                continue;
            }
            for (x, &h) in xi.row_mut(i).iter_mut().zip(cd.centered.row(j)) {
                *x += h * phi;
            }
        }
    }
    xi
}

/// Discrete KL basis of a trajectory matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KlBasis<T: Real> {
    pub coords: Vec<Vec<T>>,
    /// Per-point empirical mean removed before decomposition.
    #[serde(with = "crate::linalg::real_blob")]
    pub mean: Vec<T>,
    /// Nonincreasing, nonnegative.
    #[serde(with = "crate::linalg::real_blob")]
    pub eigenvalues: Vec<T>,
    /// `M × modes`, orthonormal columns.
    pub eigenvectors: Matrix<T>,
    /// `modes × N` samples of `ξ̂`.
    pub xi: Matrix<T>,
    /// Number of leading modes used for prediction.
    pub truncation: usize,
    pub cov_norm: String,
}

impl<T: Real> KlBasis<T> {
    /// Centers, estimates the covariance, decomposes it and projects `ξ̂`.
    /// All non-null modes are retained.
    pub fn from_trajectories(data: &TrajectoryMatrix<T>) -> Result<Self> {
        let cd = center(data)?;
        let c = empirical_covariance(&cd);
        let spectrum = eigendecompose(&c)?;
        let xi = project_xi(&cd, &spectrum);
        let lambda_max = spectrum.values.first().copied().unwrap_or_else(T::zero);
        let truncation = spectrum.values.iter().take_while(|&&l| !is_null_mode(l, lambda_max)).count();
        Ok(Self {
            coords: data.coords().to_vec(),
            mean: cd.mean,
            eigenvalues: spectrum.values,
            eigenvectors: spectrum.vectors,
            xi,
            truncation,
            cov_norm: COV_NORM.to_owned(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn n_seeds(&self) -> usize {
        self.xi.ncols()
    }

    /// Eigenvector `i` as a column.
    pub fn mode(&self, i: usize) -> Vec<T> {
        self.eigenvectors.col(i)
    }

    /// `Σ_{i<p} √λ_i ξ̂_i(ω_k) φ_i(x⁽ʲ⁾)` for every `(j, k)`; equals the
    /// centered data when no mode is dropped.
    pub fn reconstruct_centered(&self) -> Matrix<T> {
        let (m, n) = (self.n_points(), self.n_seeds());
        let mut out = Matrix::zeros(m, n);
        for i in 0..self.truncation {
            let s = self.eigenvalues[i].sqrt();
            for j in 0..m {
                let w = s * self.eigenvectors[(j, i)];
                for (o, &x) in out.row_mut(j).iter_mut().zip(self.xi.row(i)) {
                    *o += w * x;
                }
            }
        }
        out
    }

    /// Pairs of retained modes whose eigenvalues coincide within
    /// `1e-10·λ₁`; individual vectors of such pairs are rotation-ambiguous.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        let lambda_max = self.eigenvalues.first().copied().unwrap_or_else(T::zero);
        let tol = T::tol(1e-10) * lambda_max;
        (1..self.truncation)
            .filter(|&i| (self.eigenvalues[i - 1] - self.eigenvalues[i]).abs() < tol)
            .map(|i| (i - 1, i))
            .collect()
    }
}

/// Keeps the smallest number of leading modes whose eigenvalues carry at
/// least `energy` of the total variance; later modes are dropped.
pub fn truncate<T: Real>(basis: &KlBasis<T>, energy: T) -> Result<KlBasis<T>> {
    if !(energy > T::zero() && energy <= T::one()) {
        return Err(Error::Config(format!("truncation energy must lie in (0, 1], got {energy}")));
    }
    let active = &basis.eigenvalues[..basis.truncation];
    let total: T = active.iter().copied().sum();
    let p = if !(total > T::zero()) {
        log::warn!("all-zero spectrum: truncation keeps no modes");
        0
    } else if energy == T::one() {
        active.len()
    } else {
        let mut cum = T::zero();
        let mut p = active.len();
        for (i, &l) in active.iter().enumerate() {
            cum += l;
            if cum / total >= energy {
                p = i + 1;
                break;
            }
        }
        p
    };
    Ok(KlBasis {
        coords: basis.coords.clone(),
        mean: basis.mean.clone(),
        eigenvalues: basis.eigenvalues[..p].to_vec(),
        eigenvectors: basis.eigenvectors.leading_cols(p),
        xi: basis.xi.select_rows(&(0..p).collect::<Vec<_>>()),
        truncation: p,
        cov_norm: basis.cov_norm.clone(),
    })
}
