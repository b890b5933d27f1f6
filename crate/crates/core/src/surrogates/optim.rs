//! Derivative-free minimization used for kernel hyperparameters.

use crate::scalar::{cast, Real};

#[derive(Clone, Debug)]
pub struct NelderMead<T> {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: T,
    /// Initial simplex edge along every axis.
    pub step: T,
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
}

impl<T: Real> NelderMead<T> {
    /// Minimizes `f` from `x0`. Non-finite objective values are treated as
    /// `+∞`, so infeasible points are simply never accepted.
    pub fn minimize(&self, mut f: impl FnMut(&[T]) -> T, x0: &[T]) -> Minimum<T> {
        let n = x0.len();
        let evals = std::cell::Cell::new(0usize);
        let mut eval = |x: &[T]| {
            evals.set(evals.get() + 1);
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                T::infinity()
            }
        };

        let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
        let v0 = eval(x0);
        simplex.push((x0.to_vec(), v0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step;
            let v = eval(&x);
            simplex.push((x, v));
        }

        let (alpha, gamma, rho, sigma) = (T::one(), T::of(2.0), T::of(0.5), T::of(0.5));
        loop {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite or +inf"));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = worst - best;
            if evals.get() >= self.max_evals || (worst.is_finite() && spread.abs() <= self.f_tol) {
                break;
            }

            let mut centroid = vec![T::zero(); n];
            for (x, _) in &simplex[..n] {
                for (c, &v) in centroid.iter_mut().zip(x) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= cast::<T>(n));
            let towards = |t: T, from: &[T]| -> Vec<T> {
                centroid.iter().zip(from).map(|(&c, &w)| c + t * (w - c)).collect()
            };

            let reflected = towards(-alpha, &simplex[n].0);
            let f_r = eval(&reflected);
            if f_r < best {
                let expanded = towards(-gamma, &simplex[n].0);
                let f_e = eval(&expanded);
                simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
                continue;
            }
            if f_r < simplex[n - 1].1 {
                simplex[n] = (reflected, f_r);
                continue;
            }
            let (contracted, f_c) = if f_r < worst {
                let c = towards(-rho, &simplex[n].0);
                let v = eval(&c);
                (c, v)
            } else {
                let c = towards(rho, &simplex[n].0);
                let v = eval(&c);
                (c, v)
            };
            if f_c < worst.min(f_r) {
                simplex[n] = (contracted, f_c);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (x, v) in simplex.iter_mut().skip(1) {
                for (xi, &a) in x.iter_mut().zip(&anchor) {
                    *xi = a + sigma * (*xi - a);
                }
                *v = eval(x);
            }
        }
        let (x, value) = simplex.swap_remove(0);
        Minimum { x, value, evals: evals.get() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let nm = NelderMead { max_evals: 4000, f_tol: 1e-14, step: 0.5 };
        let m = nm.minimize(|x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0]);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn avoids_infeasible_region() {
        let nm = NelderMead { max_evals: 500, f_tol: 1e-12, step: 1.0 };
        let m = nm.minimize(|x: &[f64]| if x[0] < 0.5 { f64::NAN } else { (x[0] - 2.0).powi(2) }, &[1.0]);
        assert!((m.x[0] - 2.0).abs() < 1e-4);
    }
}
