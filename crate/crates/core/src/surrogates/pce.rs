//! Least-squares polynomial chaos on a box, using tensor products of
//! Legendre polynomials orthonormal under the uniform measure on `[−1, 1]`.

use serde::{Deserialize, Serialize};

use super::check_training_set;
use crate::error::{Error, Result};
use crate::linalg::{LeastSquares, Matrix};
use crate::scalar::{cast, Real};

/// Default total degree when none is selected.
pub const DEFAULT_DEGREE: usize = 3;

/// A fitted expansion `Σ_β a_β Ψ_β(map(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PceModel<T: Real> {
    pub degree: usize,
    pub dims: usize,
    /// Total-degree multi-indices, graded by degree.
    pub multi_indices: Vec<Vec<u32>>,
    #[serde(with = "crate::linalg::real_blob")]
    pub coefficients: Vec<T>,
    /// Input box mapped affinely onto `[−1, 1]^d`.
    pub bounds: Vec<(T, T)>,
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All multi-indices of `dims` entries with total degree `≤ degree`,
/// ordered by total degree, then reverse-lexicographically.
pub fn total_degree_indices(dims: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, left: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if left == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            prefix.push(first);
            fill(prefix, left - 1, remaining - first, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(binomial(degree + dims, dims));
    for total in 0..=degree as u32 {
        fill(&mut Vec::with_capacity(dims), dims, total, &mut out);
    }
    out
}

/// Orthonormal Legendre values `ψ₀(t), …, ψ_n(t)` with `ψ_k = √(2k+1)·P_k`.
pub fn legendre_orthonormal<T: Real>(n: usize, t: T) -> Vec<T> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(T::one());
    if n >= 1 {
        p.push(t);
    }
    for k in 1..n {
        let kf = cast::<T>(k);
        let next = ((T::of(2.0) * kf + T::one()) * t * p[k] - kf * p[k - 1]) / (kf + T::one());
        p.push(next);
    }
    p.iter().enumerate().map(|(k, &v)| v * (T::of(2.0) * cast::<T>(k) + T::one()).sqrt()).collect()
}

/// `x ↦ 2(x − lo)/(hi − lo) − 1` per coordinate.
pub fn to_reference<T: Real>(bounds: &[(T, T)], x: &[T]) -> Vec<T> {
    let two = T::of(2.0);
    x.iter().zip(bounds).map(|(&v, &(lo, hi))| two * (v - lo) / (hi - lo) - T::one()).collect()
}

/// Inverse of [`to_reference`].
pub fn from_reference<T: Real>(bounds: &[(T, T)], t: &[T]) -> Vec<T> {
    let half = T::of(0.5);
    t.iter().zip(bounds).map(|(&v, &(lo, hi))| lo + (v + T::one()) * (hi - lo) * half).collect()
}

fn basis_row<T: Real>(indices: &[Vec<u32>], degree: usize, t: &[T]) -> Vec<T> {
    let tables: Vec<Vec<T>> = t.iter().map(|&v| legendre_orthonormal(degree, v)).collect();
    indices
        .iter()
        .map(|beta| beta.iter().zip(&tables).fold(T::one(), |acc, (&b, tab)| acc * tab[b as usize]))
        .collect()
}

fn design_matrix<T: Real>(indices: &[Vec<u32>], degree: usize, bounds: &[(T, T)], inputs: &[Vec<T>]) -> Matrix<T> {
    let rows: Vec<Vec<T>> = inputs.iter().map(|x| basis_row(indices, degree, &to_reference(bounds, x))).collect();
    Matrix::from_rows(&rows).expect("rows share the basis size")
}

fn check_bounds<T: Real>(bounds: &[(T, T)], dims: usize) -> Result<()> {
    if bounds.len() != dims {
        return Err(Error::Config(format!("PCE needs {dims} bound pairs, got {}", bounds.len())));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::Config("PCE bounds must satisfy lower < upper".into()));
    }
    Ok(())
}

/// Least-squares fit of a total-degree expansion.
pub fn pce_fit<T: Real>(inputs: &[Vec<T>], targets: &[T], degree: usize, bounds: &[(T, T)]) -> Result<PceModel<T>> {
    fit_inner(inputs, targets, degree, bounds).map(|(m, _)| m)
}

fn fit_inner<T: Real>(
    inputs: &[Vec<T>],
    targets: &[T],
    degree: usize,
    bounds: &[(T, T)],
) -> Result<(PceModel<T>, LeastSquares<T>)> {
    check_training_set(inputs, targets, 1)?;
    let dims = inputs[0].len();
    check_bounds(bounds, dims)?;
    let indices = total_degree_indices(dims, degree);
    if inputs.len() < indices.len() {
        return Err(Error::Config(format!(
            "PCE of degree {degree} in {dims} dimensions has {} coefficients but only {} samples; lower the degree",
            indices.len(),
            inputs.len()
        )));
    }
    if inputs.len() < 2 * indices.len() {
        log::debug!("PCE fit with fewer than two samples per coefficient ({} for {})", inputs.len(), indices.len());
    }
    let psi = design_matrix(&indices, degree, bounds, inputs);
    let ls = LeastSquares::factor(&psi, T::tol(1e-12))?;
    let coefficients = ls.solve(targets);
    Ok((PceModel { degree, dims, multi_indices: indices, coefficients, bounds: bounds.to_vec() }, ls))
}

/// Leave-one-out mean squared error of a fitted model, via leverages.
pub fn loo_error<T: Real>(model: &PceModel<T>, inputs: &[Vec<T>], targets: &[T]) -> Result<T> {
    let psi = design_matrix(&model.multi_indices, model.degree, &model.bounds, inputs);
    let ls = LeastSquares::factor(&psi, T::tol(1e-12))?;
    Ok(loo_from(&ls, model, inputs, targets))
}

fn loo_from<T: Real>(ls: &LeastSquares<T>, model: &PceModel<T>, inputs: &[Vec<T>], targets: &[T]) -> T {
    let h = ls.leverages();
    let n = inputs.len();
    let mut sum = T::zero();
    for ((x, &y), &hi) in inputs.iter().zip(targets).zip(&h) {
        let r = (y - pce_predict(model, x)) / (T::one() - hi).max(T::tol(1e-12));
        sum += r * r;
    }
    sum / cast::<T>(n)
}

/// Picks the degree in `1..=max_degree` with the smallest leave-one-out
/// error among those the sample size supports.
pub fn pce_fit_auto<T: Real>(inputs: &[Vec<T>], targets: &[T], max_degree: usize, bounds: &[(T, T)]) -> Result<PceModel<T>> {
    let mut best: Option<(PceModel<T>, T)> = None;
    let mut last_err = None;
    for degree in 1..=max_degree.max(1) {
        match fit_inner(inputs, targets, degree, bounds) {
            Ok((model, ls)) => {
                let err = loo_from(&ls, &model, inputs, targets);
                if best.as_ref().is_none_or(|(_, e)| err < *e) {
                    best = Some((model, err));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(m, _)| m)
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("no feasible PCE degree".into())))
}

/// `Σ_β a_β Ψ_β(map(x))`. Points outside the bounds are extrapolated.
pub fn pce_predict<T: Real>(model: &PceModel<T>, x: &[T]) -> T {
    let t = to_reference(&model.bounds, x);
    if t.iter().any(|&v| v.abs() > T::one() + T::tol(1e-12)) {
        log::trace!("PCE evaluated outside its bounds");
    }
    let tables: Vec<Vec<T>> = t.iter().map(|&v| legendre_orthonormal(model.degree, v)).collect();
    model
        .multi_indices
        .iter()
        .zip(&model.coefficients)
        .map(|(beta, &a)| a * beta.iter().zip(&tables).fold(T::one(), |acc, (&b, tab)| acc * tab[b as usize]))
        .sum()
}

impl<T: Real> PceModel<T> {
    pub fn predict(&self, x: &[T]) -> T {
        pce_predict(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{lhs_sample, ParameterSpace};

    /// Explicit-sum Legendre polynomial, independent of the recurrence.
    fn legendre_explicit(n: usize, t: f64) -> f64 {
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let mut s = 0.0;
        for k in 0..=n / 2 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * fact(2 * n - 2 * k) / (2f64.powi(n as i32) * fact(k) * fact(n - k) * fact(n - 2 * k))
                * t.powi((n - 2 * k) as i32);
        }
        s * (2.0 * n as f64 + 1.0).sqrt()
    }

    /// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on the
    /// explicit polynomial.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        let p = |t: f64| legendre_explicit(n, t) / (2.0 * n as f64 + 1.0).sqrt();
        let dp = |t: f64| {
            let pn1 = legendre_explicit(n - 1, t) / (2.0 * n as f64 - 1.0).sqrt();
            n as f64 * (t * p(t) - pn1) / (t * t - 1.0)
        };
        (0..n)
            .map(|i| {
                let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                for _ in 0..100 {
                    t -= p(t) / dp(t);
                }
                (t, 2.0 / ((1.0 - t * t) * dp(t).powi(2)))
            })
            .collect()
    }

    #[test]
    fn multi_index_count_is_binomial() {
        for (d, p) in [(1, 4), (3, 3), (6, 3), (2, 0)] {
            let idx = total_degree_indices(d, p);
            assert_eq!(idx.len(), binomial(p + d, d));
            assert!(idx.iter().all(|b| b.len() == d && b.iter().sum::<u32>() as usize <= p));
        }
        assert_eq!(binomial(9, 6), 84);
        assert_eq!(total_degree_indices(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn recurrence_matches_explicit_polynomials() {
        for &t in &[-1.0, -0.3, 0.0, 0.55, 1.0] {
            let v = legendre_orthonormal(6, t);
            for n in 0..=6 {
                assert!((v[n] - legendre_explicit(n, t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_under_quadrature() {
        let nodes = gauss_legendre(10);
        for a in 0..=5 {
            for b in 0..=5 {
                let ip: f64 = nodes
                    .iter()
                    .map(|&(t, w)| 0.5 * w * legendre_orthonormal(5, t)[a] * legendre_orthonormal(5, t)[b])
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "<{a},{b}> = {ip}");
            }
        }
    }

    #[test]
    fn affine_map_round_trips() {
        let b = [(0.0f64, 2.0), (-3.5, 7.25)];
        let x = [1.234567, -0.1];
        let back = from_reference(&b, &to_reference(&b, &x));
        for (u, v) in back.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_targets_give_constant_coefficient() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0, ((i * 7) % 12) as f64 / 11.0]).collect();
        let m = pce_fit(&xs, &[3.25; 12], 2, &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!((m.coefficients[0] - 3.25).abs() < 1e-12);
        assert!(m.coefficients[1..].iter().all(|a| a.abs() < 1e-12));
        assert_eq!(pce_predict(&m, &[0.3, 0.9]), m.predict(&[0.3, 0.9]));
    }

    #[test]
    fn recovers_legendre_p2_from_lhs_samples() {
        let space = ParameterSpace::<f64>::cube(1, -1.0, 1.0).unwrap();
        let doe = lhs_sample(&space, 20, 4).unwrap();
        let ys: Vec<f64> = doe.points.iter().map(|x| legendre_explicit(2, x[0])).collect();
        let m = pce_fit(&doe.points, &ys, 2, space.bounds()).unwrap();
        assert!((m.coefficients[2] - 1.0).abs() < 1e-8);
        assert!(m.coefficients[0].abs() < 1e-8 && m.coefficients[1].abs() < 1e-8);
    }

    #[test]
    fn reproduces_linear_polynomials_exactly() {
        let space = ParameterSpace::<f64>::cube(3, 0.0, 2.0).unwrap();
        let doe = lhs_sample(&space, 40, 8).unwrap();
        let f = |x: &[f64]| 1.5 + 2.0 * x[0] - x[1] + 0.25 * x[2];
        let ys: Vec<f64> = doe.points.iter().map(|x| f(x)).collect();
        for degree in [1, 2] {
            let m = pce_fit(&doe.points, &ys, degree, space.bounds()).unwrap();
            let resid = doe.points.iter().zip(&ys).map(|(x, y)| (m.predict(x) - y).abs()).fold(0.0, f64::max);
            assert!(resid < 1e-10);
            for x in space.sample_uniform(100, 1) {
                assert!((m.predict(&x) - f(&x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn prediction_matches_term_by_term_sum() {
        let space = ParameterSpace::<f64>::cube(2, -1.0, 3.0).unwrap();
        let doe = lhs_sample(&space, 30, 2).unwrap();
        let ys: Vec<f64> = doe.points.iter().map(|x| (x[0] * x[1]).sin()).collect();
        let m = pce_fit(&doe.points, &ys, 3, space.bounds()).unwrap();
        for x in space.sample_uniform(20, 9) {
            let t = to_reference(&m.bounds, &x);
            let mut naive = 0.0;
            for (beta, a) in m.multi_indices.iter().zip(&m.coefficients).rev() {
                naive += a * legendre_explicit(beta[0] as usize, t[0]) * legendre_explicit(beta[1] as usize, t[1]);
            }
            assert!((pce_predict(&m, &x) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn underdetermined_fit_suggests_lower_degree() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let err = pce_fit(&xs, &[0.0; 5], 3, &[(0.0, 4.0), (0.0, 16.0)]).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("lower the degree")));
    }

    #[test]
    fn loo_selection_prefers_true_degree() {
        let space = ParameterSpace::<f64>::cube(2, 0.0, 1.0).unwrap();
        let doe = lhs_sample(&space, 60, 3).unwrap();
        let ys: Vec<f64> = doe.points.iter().map(|x| x[0] * x[0] - x[1] + 0.5 * x[0] * x[1]).collect();
        let m = pce_fit_auto(&doe.points, &ys, 5, space.bounds()).unwrap();
        assert!(m.degree >= 2);
        assert!(loo_error(&m, &doe.points, &ys).unwrap() < 1e-20);
    }
}
