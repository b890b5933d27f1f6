//! Deterministic scalar surrogates: linear RBF interpolation, ordinary
//! Kriging and least-squares polynomial chaos.

mod kernel;
mod kriging;
mod optim;
mod pce;
mod rbf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

pub use kernel::{correlation_matrix, kernel_eval, scaled_distance, KernelFamily, KernelSpec};
pub use kriging::{kriging_fit, kriging_fit_with, Kriging, KrigingOptions, NUGGET_MAX, NUGGET_START};
pub use optim::{Minimum, NelderMead};
pub use pce::{
    binomial, from_reference, legendre_orthonormal, loo_error, pce_fit, pce_fit_auto, pce_predict, to_reference,
    total_degree_indices, PceModel, DEFAULT_DEGREE,
};
pub use rbf::{rbf_linear_fit, RbfLinear};

/// Highest degree tried by leave-one-out selection.
pub const MAX_AUTO_DEGREE: usize = 5;

/// Affine target scaling `(y − mean)/scale`, undone on prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Standardizer<T: Real> {
    pub mean: T,
    pub scale: T,
}

impl<T: Real> Standardizer<T> {
    /// Mean and population standard deviation; constant targets keep scale 1.
    pub fn fit(targets: &[T]) -> Self {
        let n = cast::<T>(targets.len().max(1));
        let mean = targets.iter().copied().sum::<T>() / n;
        let var = targets.iter().map(|&t| (t - mean) * (t - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        let tiny = T::tol(1e-300).max(mean.abs() * T::epsilon());
        let scale = if sd > tiny && sd.is_finite() { sd } else { T::one() };
        Self { mean, scale }
    }

    #[inline]
    pub fn forward(&self, y: T) -> T {
        (y - self.mean) / self.scale
    }

    #[inline]
    pub fn inverse(&self, z: T) -> T {
        z * self.scale + self.mean
    }
}

/// Shape and content checks shared by every fit.
pub(crate) fn check_training_set<T: Real>(inputs: &[Vec<T>], targets: &[T], min_points: usize) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::Config(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    if inputs.len() < min_points.max(1) {
        return Err(Error::Config(format!(
            "surrogate needs at least {} training points, got {}",
            min_points.max(1),
            inputs.len()
        )));
    }
    let d = inputs[0].len();
    if d == 0 {
        return Err(Error::Config("training inputs have zero dimensions".into()));
    }
    if let Some(k) = inputs.iter().position(|x| x.len() != d) {
        return Err(Error::Config(format!("training input {k} has {} dims, expected {d}", inputs[k].len())));
    }
    if let Some(k) = inputs.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("training input {k} is not finite")));
    }
    if let Some(k) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("training target {k} is not finite")));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| {
        inputs[a]
            .iter()
            .zip(&inputs[b])
            .map(|(x, y)| x.partial_cmp(y).expect("finite"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if inputs[w[0]] == inputs[w[1]] {
            let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::Data(format!("duplicate training inputs at indices {i},{j}")));
        }
    }
    Ok(())
}

/// Which surrogate to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SurrogateKind {
    RbfLinear,
    Kriging(KernelFamily),
    /// Fixed total degree.
    Pce(usize),
    /// Degree chosen in `1..=MAX_AUTO_DEGREE` by leave-one-out error.
    PceAuto,
}

impl SurrogateKind {
    /// Minimum number of training points the fit accepts, for inputs in `dims`.
    pub fn min_points(self, dims: usize) -> usize {
        match self {
            Self::RbfLinear => dims + 1,
            Self::Kriging(_) => 3,
            Self::Pce(p) => binomial(p + dims, dims),
            Self::PceAuto => dims + 1,
        }
    }

    /// Whether fits reproduce their training targets.
    pub fn interpolates(self) -> bool {
        matches!(self, Self::RbfLinear | Self::Kriging(_))
    }
}

impl Default for SurrogateKind {
    fn default() -> Self {
        Self::Kriging(KernelFamily::Matern52)
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RbfLinear => f.write_str("rbf_linear"),
            Self::Kriging(fam) => write!(f, "kriging:{}", fam.name()),
            Self::Pce(p) => write!(f, "pce:{p}"),
            Self::PceAuto => f.write_str("pce:auto"),
        }
    }
}

/// Parses `rbf_linear`, `kriging`, `kriging:<family>`, `pce`, `pce:<degree>` or `pce:auto`.
impl FromStr for SurrogateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.as_str(), None),
        };
        match (head, arg) {
            ("rbf_linear" | "rbf" | "linear", None) => Ok(Self::RbfLinear),
            ("kriging", None) => Ok(Self::default()),
            ("kriging", Some(fam)) => Ok(Self::Kriging(fam.parse()?)),
            ("pce", None) => Ok(Self::Pce(DEFAULT_DEGREE)),
            ("pce", Some("auto")) => Ok(Self::PceAuto),
            ("pce", Some(p)) => p
                .parse()
                .map(Self::Pce)
                .map_err(|_| Error::Config(format!("invalid PCE degree `{p}`"))),
            _ => Err(Error::Config(format!(
                "unknown surrogate `{s}` (rbf_linear, kriging[:family], pce[:degree|auto])"
            ))),
        }
    }
}

impl Serialize for SurrogateKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SurrogateKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fitted surrogate of any kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum Surrogate<T: Real> {
    RbfLinear(RbfLinear<T>),
    Kriging(Kriging<T>),
    Pce(PceModel<T>),
}

/// Coordinate-wise bounding box of a point set.
pub fn bounding_box<T: Real>(points: &[Vec<T>]) -> Vec<(T, T)> {
    let d = points.first().map_or(0, Vec::len);
    (0..d)
        .map(|k| {
            let (lo, hi) = points
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
            if hi > lo {
                (lo, hi)
            } else {
                (lo - T::one(), hi + T::one())
            }
        })
        .collect()
}

impl<T: Real> Surrogate<T> {
    /// Fits `kind`. PCE inputs are mapped from `bounds`, or from the
    /// bounding box of the inputs when none are given.
    pub fn fit(kind: SurrogateKind, inputs: &[Vec<T>], targets: &[T], bounds: Option<&[(T, T)]>) -> Result<Self> {
        let pce_bounds = || bounds.map(<[_]>::to_vec).unwrap_or_else(|| bounding_box(inputs));
        Ok(match kind {
            SurrogateKind::RbfLinear => Self::RbfLinear(rbf_linear_fit(inputs, targets)?),
            SurrogateKind::Kriging(family) => Self::Kriging(kriging_fit(inputs, targets, family)?),
            SurrogateKind::Pce(p) => Self::Pce(pce_fit(inputs, targets, p, &pce_bounds())?),
            SurrogateKind::PceAuto => Self::Pce(pce_fit_auto(inputs, targets, MAX_AUTO_DEGREE, &pce_bounds())?),
        })
    }

    pub fn predict(&self, x: &[T]) -> T {
        match self {
            Self::RbfLinear(s) => s.predict(x),
            Self::Kriging(s) => s.predict(x),
            Self::Pce(s) => s.predict(x),
        }
    }

    pub fn is_interpolating(&self) -> bool {
        match self {
            Self::RbfLinear(_) => true,
            Self::Kriging(k) => k.is_interpolating(),
            Self::Pce(_) => false,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Self::RbfLinear(s) => s.dims(),
            Self::Kriging(s) => s.dims(),
            Self::Pce(s) => s.dims,
        }
    }

    pub fn kind(&self) -> SurrogateKind {
        match self {
            Self::RbfLinear(_) => SurrogateKind::RbfLinear,
            Self::Kriging(k) => SurrogateKind::Kriging(k.family),
            Self::Pce(p) => SurrogateKind::Pce(p.degree),
        }
    }
}
