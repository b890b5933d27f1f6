//! Distances between predicted and simulated output distributions, and the
//! asymptotic two-sample Kolmogorov–Smirnov test.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

/// Default number of shared bins.
pub const DEFAULT_BINS: usize = 20;
/// Default KS level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Probability masses over shared bin edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Histogram<T: Real> {
    pub edges: Vec<T>,
    pub masses: Vec<T>,
}

impl<T: Real> Histogram<T> {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

fn check_sample<T: Real>(s: &[T], name: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Data(format!("{name} sample is empty")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{name} sample has non-finite values")));
    }
    Ok(())
}

/// Equal-width bins spanning both samples, rightmost edge inclusive.
/// When every value is identical the result is one bin of mass 1.
pub fn shared_histogram<T: Real>(a: &[T], b: &[T], bins: usize) -> Result<(Histogram<T>, Histogram<T>)> {
    check_sample(a, "first")?;
    check_sample(b, "second")?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let edges: Vec<T> = if hi > lo {
        let w = (hi - lo) / cast::<T>(bins);
        (0..=bins).map(|i| if i == bins { hi } else { lo + w * cast::<T>(i) }).collect()
    } else {
        let half = T::of(0.5) * T::one().max(lo.abs());
        vec![lo - half, lo + half]
    };
    Ok((fill(a, &edges), fill(b, &edges)))
}

fn bin_of<T: Real>(edges: &[T], x: T) -> usize {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut k = ((x - lo) / (hi - lo) * cast::<T>(bins)).floor().to_usize().unwrap_or(0).min(bins - 1);
    while k > 0 && x < edges[k] {
        k -= 1;
    }
    while k + 1 < bins && x >= edges[k + 1] {
        k += 1;
    }
    k
}

fn fill<T: Real>(s: &[T], edges: &[T]) -> Histogram<T> {
    let mut counts = vec![0usize; edges.len() - 1];
    for &x in s {
        counts[bin_of(edges, x)] += 1;
    }
    let n = cast::<T>(s.len());
    Histogram { edges: edges.to_vec(), masses: counts.into_iter().map(|c| cast::<T>(c) / n).collect() }
}

fn check_pair<T: Real>(p: &Histogram<T>, q: &Histogram<T>) -> Result<()> {
    if p.edges != q.edges || p.masses.len() != q.masses.len() {
        return Err(Error::Data("histograms do not share bin edges".into()));
    }
    Ok(())
}

/// `Σ min(p_i, q_i)`; exactly 1 for equal histograms.
pub fn histogram_intersection<T: Real>(p: &Histogram<T>, q: &Histogram<T>) -> Result<T> {
    check_pair(p, q)?;
    if p.masses == q.masses {
        return Ok(T::one());
    }
    Ok(p.masses.iter().zip(&q.masses).map(|(&a, &b)| a.min(b)).sum::<T>().min(T::one()))
}

/// `(1/√2)·‖√p − √q‖₂`.
pub fn hellinger<T: Real>(p: &Histogram<T>, q: &Histogram<T>) -> Result<T> {
    check_pair(p, q)?;
    let s: T = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((s * T::of(0.5)).sqrt().min(T::one()))
}

/// Jensen–Shannon divergence with base-2 logarithms, so it lies in `[0, 1]`.
pub fn js_divergence<T: Real>(p: &Histogram<T>, q: &Histogram<T>) -> Result<T> {
    check_pair(p, q)?;
    let kl_half = |a: T, r: T| if a > T::zero() { a * (a / r).log2() } else { T::zero() };
    let s: T = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(&a, &b)| {
            let r = (a + b) * T::of(0.5);
            kl_half(a, r) + kl_half(b, r)
        })
        .sum();
    Ok((s * T::of(0.5)).max(T::zero()).min(T::one()))
}

/// `c(α) = √(−ln(α/2)/2)`.
pub fn ks_critical_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Exact sup-distance between the two empirical CDFs.
pub fn ks_statistic<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    check_sample(a, "first")?;
    check_sample(b, "second")?;
    let sort = |s: &[T]| {
        let mut v = s.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
        v
    };
    let (a, b) = (sort(a), sort(b));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut sup = T::zero();
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let d = (cast::<T>(i) / cast::<T>(n) - cast::<T>(j) / cast::<T>(m)).abs();
        sup = sup.max(d);
    }
    Ok(sup)
}

/// Statistic and rejection at level `alpha` against
/// `c(α)·√((n+m)/(nm))`.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T], alpha: f64) -> Result<(T, bool)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("KS level must lie in (0, 1), got {alpha}")));
    }
    let d = ks_statistic(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let threshold = ks_critical_constant(alpha) * ((n + m) / (n * m)).sqrt();
    Ok((d, d.as_f64() > threshold))
}

/// All metrics for one predicted/reference pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MetricReport<T: Real> {
    pub hist_intersection: T,
    pub hellinger: T,
    pub js_divergence: T,
    pub ks_statistic: T,
    pub ks_reject: bool,
}

pub fn compare<T: Real>(predicted: &[T], reference: &[T], bins: usize, alpha: f64) -> Result<MetricReport<T>> {
    let (p, q) = shared_histogram(predicted, reference, bins)?;
    let (ks_statistic, ks_reject) = ks_two_sample(predicted, reference, alpha)?;
    Ok(MetricReport {
        hist_intersection: histogram_intersection(&p, &q)?,
        hellinger: hellinger(&p, &q)?,
        js_divergence: js_divergence(&p, &q)?,
        ks_statistic,
        ks_reject,
    })
}

/// Both empirical CDFs evaluated at every distinct value of the merged
/// sample: rows `(x, F_predicted(x), F_reference(x))`.
pub fn cdf_pairs<T: Real>(predicted: &[T], reference: &[T]) -> Result<Vec<(T, T, T)>> {
    check_sample(predicted, "predicted")?;
    check_sample(reference, "reference")?;
    let cmp = |x: &T, y: &T| x.partial_cmp(y).unwrap_or(Ordering::Equal);
    let mut a = predicted.to_vec();
    let mut b = reference.to_vec();
    a.sort_by(cmp);
    b.sort_by(cmp);
    let mut xs: Vec<T> = a.iter().chain(&b).copied().collect();
    xs.sort_by(cmp);
    xs.dedup();
    let (n, m) = (cast::<T>(a.len()), cast::<T>(b.len()));
    let (mut i, mut j) = (0, 0);
    Ok(xs
        .into_iter()
        .map(|x| {
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            (x, cast::<T>(i) / n, cast::<T>(j) / m)
        })
        .collect())
}
