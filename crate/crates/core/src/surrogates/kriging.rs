//! Ordinary Kriging: constant unknown trend, stationary correlation with
//! per-dimension lengthscales fitted by maximum likelihood.
//!
//! With `R` the correlation matrix and `1` the vector of ones, the GLS trend
//! is `μ = 1ᵀR⁻¹y / 1ᵀR⁻¹1` and the profiled variance
//! `σ² = (y − μ1)ᵀR⁻¹(y − μ1)/n`. Lengthscales minimize the concentrated
//! negative log-likelihood `n·ln σ² + ln|R|` by Nelder–Mead over `ln θ`,
//! restarted from five isotropic points.

use serde::{Deserialize, Serialize};

use super::kernel::{correlation_matrix, kernel_eval, KernelFamily};
use super::optim::NelderMead;
use super::{check_training_set, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::{cast, Real};

/// First nugget tried, relative to unit correlation.
pub const NUGGET_START: f64 = 1e-10;
/// Largest nugget tried before giving up.
pub const NUGGET_MAX: f64 = 1e-6;

/// Start multipliers (of each input range) for the lengthscale search.
const START_GRID: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];
/// Search box for `θ / range`.
const THETA_BOX: (f64, f64) = (1e-2, 1e2);
const EVALS_PER_START: usize = 120;
/// Refinement steps that pull `α` from `(R + nugget·I)⁻¹` towards `R⁻¹`.
const REFINE_STEPS: usize = 30;

/// Tuning knobs for [`kriging_fit_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrigingOptions {
    pub family: KernelFamily,
    /// Skip likelihood optimization and use these lengthscales.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_lengthscales: Option<Vec<f64>>,
    pub nugget_start: f64,
    pub nugget_max: f64,
}

impl KrigingOptions {
    pub fn new(family: KernelFamily) -> Self {
        Self { family, fixed_lengthscales: None, nugget_start: NUGGET_START, nugget_max: NUGGET_MAX }
    }
}

/// A fitted ordinary Kriging predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Kriging<T: Real> {
    pub family: KernelFamily,
    #[serde(with = "crate::linalg::real_blob")]
    pub lengthscales: Vec<T>,
    pub nugget: T,
    /// GLS trend (standardized units).
    pub trend: T,
    /// Profiled process variance (standardized units).
    pub variance: T,
    inputs: Vec<Vec<T>>,
    /// `R⁻¹(y − μ1)`.
    #[serde(with = "crate::linalg::real_blob")]
    alpha: Vec<T>,
    standardizer: Standardizer<T>,
}

struct Factored<T: Real> {
    chol: Cholesky<T>,
    nugget: T,
}

/// Cholesky of `R + nugget·I`, escalating the nugget ×10 on failure.
fn factor_with_nugget<T: Real>(
    family: KernelFamily,
    theta: &[T],
    inputs: &[Vec<T>],
    start: T,
    max: T,
) -> Result<Factored<T>> {
    let mut nugget = start;
    let mut last_err;
    loop {
        let r = correlation_matrix(family, theta, inputs, nugget);
        match Cholesky::factor(&r) {
            Ok(chol) => return Ok(Factored { chol, nugget }),
            Err(e) => last_err = e,
        }
        if nugget >= max {
            break;
        }
        nugget = (nugget * T::of(10.0)).min(max);
    }
    let r = correlation_matrix(family, theta, inputs, max);
    let cond = crate::linalg::symmetric_eigen(&r)
        .map(|e| {
            let lo = e.values.first().copied().unwrap_or_else(T::one);
            let hi = e.values.last().copied().unwrap_or_else(T::one);
            format!("{:e}", hi / lo.abs())
        })
        .unwrap_or_else(|_| "unknown".into());
    Err(Error::Numerical(format!(
        "Kriging correlation matrix is ill-conditioned even with nugget {max:e} (condition number {cond}; {last_err})"
    )))
}

/// `(μ, σ², α)` for a factored correlation matrix.
fn gls<T: Real>(chol: &Cholesky<T>, y: &[T]) -> (T, T, Vec<T>) {
    let n = y.len();
    let ones = vec![T::one(); n];
    let r_inv_one = chol.solve(&ones);
    let r_inv_y = chol.solve(y);
    let mu = dot(&ones, &r_inv_y) / dot(&ones, &r_inv_one);
    let alpha: Vec<T> = r_inv_y.iter().zip(&r_inv_one).map(|(&a, &b)| a - mu * b).collect();
    let resid: Vec<T> = y.iter().map(|&v| v - mu).collect();
    let sigma2 = dot(&resid, &alpha) / cast::<T>(n);
    (mu, sigma2, alpha)
}

fn neg_log_likelihood<T: Real>(chol: &Cholesky<T>, y: &[T]) -> T {
    let (_, sigma2, _) = gls(chol, y);
    let floor = T::min_positive_value().sqrt();
    cast::<T>(y.len()) * sigma2.max(floor).ln() + chol.log_det()
}

/// Iterative refinement of `Rα = y − μ1` with the jittered factor as
/// preconditioner. The nugget stabilizes the factorization; refinement
/// removes most of the smoothing it would otherwise cause at the nodes.
fn refine<T: Real>(fac: &Factored<T>, r: &Matrix<T>, y: &[T], mu: T, alpha: &mut [T]) {
    let residual = |a: &[T]| -> Vec<T> { r.matvec(a).iter().zip(y).map(|(&ra, &yi)| yi - mu - ra).collect() };
    let norm = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut res = residual(alpha);
    let mut best = norm(&res);
    let target = T::epsilon() * T::of(16.0) * norm(y).max(T::one());
    for _ in 0..REFINE_STEPS {
        if best <= target {
            break;
        }
        let delta = fac.chol.solve(&res);
        let trial: Vec<T> = alpha.iter().zip(&delta).map(|(&a, &d)| a + d).collect();
        let trial_res = residual(&trial);
        let n = norm(&trial_res);
        if !(n < best) {
            break;
        }
        alpha.copy_from_slice(&trial);
        res = trial_res;
        best = n;
    }
}

/// Fits ordinary Kriging with the default options for `family`.
pub fn kriging_fit<T: Real>(inputs: &[Vec<T>], targets: &[T], family: KernelFamily) -> Result<Kriging<T>> {
    kriging_fit_with(inputs, targets, &KrigingOptions::new(family))
}

pub fn kriging_fit_with<T: Real>(inputs: &[Vec<T>], targets: &[T], opts: &KrigingOptions) -> Result<Kriging<T>> {
    check_training_set(inputs, targets, 3)?;
    if !(opts.nugget_start >= 0.0 && opts.nugget_max >= opts.nugget_start) {
        return Err(Error::Config("nugget range must satisfy 0 ≤ start ≤ max".into()));
    }
    let d = inputs[0].len();
    let standardizer = Standardizer::fit(targets);
    let y: Vec<T> = targets.iter().map(|&t| standardizer.forward(t)).collect();
    let (nug0, nug_max) = (T::of(opts.nugget_start.max(0.0)), T::of(opts.nugget_max));

    let ranges: Vec<T> = (0..d)
        .map(|k| {
            let (lo, hi) = inputs.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
            let r = hi - lo;
            if r > T::zero() {
                r
            } else {
                T::one()
            }
        })
        .collect();

    let theta = match &opts.fixed_lengthscales {
        Some(fixed) => {
            if fixed.len() != d || fixed.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::Config(format!("need {d} positive fixed lengthscales")));
            }
            fixed.iter().map(|&t| T::of(t)).collect()
        }
        None if y.iter().all(|&v| v == T::zero()) => ranges.clone(),
        None => optimize_lengthscales(opts.family, inputs, &y, &ranges, nug0, nug_max),
    };

    let fac = factor_with_nugget(opts.family, &theta, inputs, nug0, nug_max)?;
    let (trend, variance, mut alpha) = gls(&fac.chol, &y);
    if fac.nugget <= T::of(1e-8) {
        refine(&fac, &correlation_matrix(opts.family, &theta, inputs, T::zero()), &y, trend, &mut alpha);
    }
    if !alpha.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("Kriging weights are not finite".into()));
    }
    Ok(Kriging {
        family: opts.family,
        lengthscales: theta,
        nugget: fac.nugget,
        trend,
        variance,
        inputs: inputs.to_vec(),
        alpha,
        standardizer,
    })
}

fn optimize_lengthscales<T: Real>(
    family: KernelFamily,
    inputs: &[Vec<T>],
    y: &[T],
    ranges: &[T],
    nug0: T,
    nug_max: T,
) -> Vec<T> {
    let lower: Vec<T> = ranges.iter().map(|&r| (r * T::of(THETA_BOX.0)).ln()).collect();
    let upper: Vec<T> = ranges.iter().map(|&r| (r * T::of(THETA_BOX.1)).ln()).collect();
    let to_theta = |log_theta: &[T]| -> Vec<T> {
        log_theta
            .iter()
            .zip(lower.iter().zip(&upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi).exp())
            .collect()
    };
    let objective = |log_theta: &[T]| -> T {
        let theta = to_theta(log_theta);
        match factor_with_nugget(family, &theta, inputs, nug0, nug_max) {
            Ok(fac) => neg_log_likelihood(&fac.chol, y),
            Err(_) => T::infinity(),
        }
    };
    let nm = NelderMead { max_evals: EVALS_PER_START, f_tol: T::tol(1e-7), step: T::one() };
    let mut best: Option<(Vec<T>, T)> = None;
    for &s in &START_GRID {
        let x0: Vec<T> = ranges.iter().map(|&r| (r * T::of(s)).ln()).collect();
        let m = nm.minimize(objective, &x0);
        if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (x, value) = best.expect("at least one start");
    if value.is_finite() {
        to_theta(&x)
    } else {
        ranges.to_vec()
    }
}

impl<T: Real> Kriging<T> {
    /// Conditional mean `μ + r(x)ᵀR⁻¹(y − μ1)`.
    pub fn predict(&self, x: &[T]) -> T {
        let s = self
            .inputs
            .iter()
            .zip(&self.alpha)
            .map(|(xi, &a)| a * kernel_eval(self.family, &self.lengthscales, x, xi))
            .sum::<T>();
        self.standardizer.inverse(self.trend + s)
    }

    /// Correlation matrix of the training inputs, nugget included.
    pub fn correlation(&self) -> Matrix<T> {
        correlation_matrix(self.family, &self.lengthscales, &self.inputs, self.nugget)
    }

    pub fn dims(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn is_interpolating(&self) -> bool {
        self.nugget <= T::of(1e-8)
    }
}
