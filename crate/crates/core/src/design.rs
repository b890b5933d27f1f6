//! Parameter spaces, Latin hypercube designs and the seed registry that
//! freezes simulator trajectories.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

/// Axis-aligned box `∏ [lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ParameterSpace<T: Real> {
    bounds: Vec<(T, T)>,
}

impl<T: Real> ParameterSpace<T> {
    pub fn new(bounds: Vec<(T, T)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("parameter space needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "degenerate bounds in dim {}: [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[lower, upper]^dims`.
    pub fn cube(dims: usize, lower: T, upper: T) -> Result<Self> {
        Self::new(vec![(lower, upper); dims])
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dims() && x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    /// Describes the first violation of `x` against the box, if any.
    pub fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dims(), x.len())));
        }
        for (i, (&v, &(lo, hi))) in x.iter().zip(&self.bounds).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(Error::Domain(format!(
                    "coordinate {v} outside [{lo}, {hi}] in dim {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Cartesian product with itself, the domain of a covariance function.
    pub fn squared(&self) -> Self {
        Self { bounds: self.bounds.iter().chain(&self.bounds).copied().collect() }
    }

    /// Draws `n` i.i.d. uniform points (test-point sampling).
    pub fn sample_uniform(&self, n: usize, rng_seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        (0..n)
            .map(|_| {
                self.bounds
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * T::of(rng.gen::<f64>()))
                    .collect()
            })
            .collect()
    }
}

/// A finite set of input points inside a parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DesignOfExperiments<T: Real> {
    pub points: Vec<Vec<T>>,
    pub space: ParameterSpace<T>,
}

impl<T: Real> DesignOfExperiments<T> {
    /// Builds a design and rejects it if any invariant is violated.
    pub fn new(points: Vec<Vec<T>>, space: ParameterSpace<T>) -> Result<Self> {
        let doe = Self { points, space };
        let violations = validate_design(&doe);
        if violations.is_empty() {
            Ok(doe)
        } else {
            Err(Error::Data(violations.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Latin hypercube sample of `m` points.
///
/// Each axis is cut into `m` equal strata; a seeded permutation assigns one
/// stratum per point and a uniform offset places it inside the stratum.
pub fn lhs_sample<T: Real>(space: &ParameterSpace<T>, m: usize, rng_seed: u64) -> Result<DesignOfExperiments<T>> {
    if m == 0 {
        return Err(Error::Config("LHS needs at least one point".into()));
    }
    // Re-validate: a space may have been deserialized without going through `new`.
    let space = ParameterSpace::new(space.bounds.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let d = space.dims();
    let mut points = vec![vec![T::zero(); d]; m];
    let mut strata: Vec<usize> = (0..m).collect();
    for (k, &(lo, hi)) in space.bounds.iter().enumerate() {
        strata.shuffle(&mut rng);
        let width = (hi - lo) / cast::<T>(m);
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u = T::of(rng.gen::<f64>());
            let mut v = lo + (cast::<T>(s) + u) * width;
            // Rounding can push a point onto the upper stratum edge.
            let stratum_top = lo + cast::<T>(s + 1) * width;
            if v >= stratum_top {
                v = lo + (cast::<T>(s) + T::of(0.5)) * width;
            }
            p[k] = v;
        }
    }
    Ok(DesignOfExperiments { points, space })
}

/// Lists every invariant violation of `doe`; empty means valid.
pub fn validate_design<T: Real>(doe: &DesignOfExperiments<T>) -> Vec<String> {
    let mut out = Vec::new();
    let d = doe.space.dims();
    for (k, p) in doe.points.iter().enumerate() {
        if p.len() != d {
            out.push(format!("point {k} has {} coordinates, expected {d}", p.len()));
            continue;
        }
        for (i, (&v, &(lo, hi))) in p.iter().zip(doe.space.bounds()).enumerate() {
            if !(v >= lo && v <= hi) {
                out.push(format!("point {k} outside bounds in dim {}", i + 1));
            }
        }
    }
    for i in 0..doe.points.len() {
        for j in (i + 1)..doe.points.len() {
            if doe.points[i] == doe.points[j] {
                out.push(format!("duplicate point at indices {i},{j}"));
            }
        }
    }
    out
}

/// Ordered list of distinct simulator seeds; position `k` is trajectory `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct SeedRegistry {
    seeds: Vec<u64>,
}

impl SeedRegistry {
    pub fn new(seeds: Vec<u64>) -> Result<Self> {
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("seed {} listed twice", w[0])));
        }
        Ok(Self { seeds })
    }

    /// Seeds `1..=n`.
    pub fn consecutive(n: usize) -> Self {
        Self { seeds: (1..=n as u64).collect() }
    }

    /// Seeds `start..start+n`.
    pub fn range(start: u64, n: usize) -> Self {
        Self { seeds: (start..start + n as u64).collect() }
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

impl TryFrom<Vec<u64>> for SeedRegistry {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SeedRegistry> for Vec<u64> {
    fn from(r: SeedRegistry) -> Self {
        r.seeds
    }
}
