//! Repeated k-fold cross-validation and test-point scoring of emulators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::SeedRegistry;
use crate::emulator::{EmulatorConfig, KlEmulator};
use crate::empirical::TrajectoryMatrix;
use crate::error::{Error, Result};
use crate::metrics::{compare, MetricReport, DEFAULT_ALPHA, DEFAULT_BINS};
use crate::scalar::{compensated_sum, Real};
use crate::simulators::StochasticSimulator;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPlan {
    pub k: usize,
    pub repetitions: usize,
    pub emulator: EmulatorConfig,
    pub bins: usize,
    pub alpha: f64,
}

impl ValidationPlan {
    pub fn new(k: usize, repetitions: usize, emulator: EmulatorConfig) -> Self {
        Self { k, repetitions, emulator, bins: DEFAULT_BINS, alpha: DEFAULT_ALPHA }
    }

    /// Checks the plan against `m` design points in `dims` dimensions.
    pub fn check(&self, m: usize, dims: usize) -> Result<()> {
        if self.k < 2 || self.k > m {
            return Err(Error::Config(format!("k must lie in [2, {m}], got {}", self.k)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let smallest_train = m - m.div_ceil(self.k);
        let need = self.emulator.min_training_points(dims);
        if smallest_train < need {
            return Err(Error::Config(format!(
                "folds leave {smallest_train} training points, {} needs {need}",
                self.emulator.surrogate
            )));
        }
        Ok(())
    }
}

/// Splits a shuffled order into `k` folds; the first `len mod k` folds get
/// one extra point.
pub fn split_folds(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = compensated_sum(values.iter().copied()) / n as f64;
        let std = if n > 1 {
            (compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregate of many metric reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub hist_intersection: Stat,
    pub hellinger: Stat,
    pub js_divergence: Stat,
    pub ks_statistic: Stat,
    pub ks_rejection_rate: f64,
}

pub fn summarize<T: Real>(reports: &[MetricReport<T>]) -> MetricSummary {
    let col = |f: fn(&MetricReport<T>) -> T| reports.iter().map(|r| f(r).as_f64()).collect::<Vec<_>>();
    let rejects = reports.iter().filter(|r| r.ks_reject).count();
    MetricSummary {
        count: reports.len(),
        hist_intersection: Stat::of(&col(|r| r.hist_intersection)),
        hellinger: Stat::of(&col(|r| r.hellinger)),
        js_divergence: Stat::of(&col(|r| r.js_divergence)),
        ks_statistic: Stat::of(&col(|r| r.ks_statistic)),
        ks_rejection_rate: if reports.is_empty() { f64::NAN } else { rejects as f64 / reports.len() as f64 },
    }
}

/// One held-out comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FoldRecord<T: Real> {
    pub repetition: usize,
    pub fold: usize,
    /// Design index of the held-out point.
    pub point: usize,
    #[serde(flatten)]
    pub report: MetricReport<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub plan: ValidationPlan,
    pub rng_seed: u64,
    pub n_points: usize,
    pub n_seeds: usize,
    pub metrics: MetricSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRun<T: Real> {
    pub summary: ValidationSummary,
    pub records: Vec<FoldRecord<T>>,
}

/// Repeated k-fold cross-validation: every repetition shuffles the design
/// with the seeded stream, each fold is held out in turn, the emulator is
/// refitted on the rest and its ensembles are compared with the held-out
/// trajectories.
pub fn k_fold_validate<T: Real>(data: &TrajectoryMatrix<T>, plan: &ValidationPlan, rng_seed: u64) -> Result<ValidationRun<T>> {
    let m = data.n_points();
    plan.check(m, data.dims())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut units = Vec::with_capacity(plan.k * plan.repetitions);
    for rep in 0..plan.repetitions {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        for (f, fold) in split_folds(&order, plan.k).into_iter().enumerate() {
            units.push((rep, f, fold));
        }
    }
    let per_unit = units
        .par_iter()
        .map(|(rep, f, held)| {
            let train: Vec<usize> = (0..m).filter(|j| !held.contains(j)).collect();
            let train_data = data.select_points(&train)?;
            let held_coords: Vec<Vec<T>> = held.iter().map(|&j| data.coords()[j].clone()).collect();
            let emu = plan
                .emulator
                .fit(&train_data, &held_coords)
                .map_err(|e| e.context(format_args!("repetition {rep}, fold {f}")))?;
            held.iter()
                .map(|&j| {
                    let predicted = emu.predict_samples(&data.coords()[j])?;
                    let report = compare(&predicted, data.values().row(j), plan.bins, plan.alpha)?;
                    Ok(FoldRecord { repetition: *rep, fold: *f, point: j, report })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<FoldRecord<T>> = per_unit.into_iter().flatten().collect();
    let reports: Vec<MetricReport<T>> = records.iter().map(|r| r.report).collect();
    let summary = ValidationSummary {
        plan: *plan,
        rng_seed,
        n_points: m,
        n_seeds: data.n_seeds(),
        metrics: summarize(&reports),
    };
    log::info!(
        "k-fold ({}×{}): mean intersection {:.4}, KS rejection {:.3}",
        plan.k,
        plan.repetitions,
        summary.metrics.hist_intersection.mean,
        summary.metrics.ks_rejection_rate
    );
    Ok(ValidationRun { summary, records })
}

/// Simulates the reference ensemble at every test point with `seeds`,
/// predicts with the emulator and compares. Passing the emulator's own
/// registry gives common random numbers; fresh seeds give an
/// out-of-trajectory comparison.
pub fn test_point_evaluate<T: Real, S: StochasticSimulator<T> + ?Sized>(
    emu: &KlEmulator<T>,
    sim: &S,
    test_points: &[Vec<T>],
    seeds: &SeedRegistry,
    bins: usize,
    alpha: f64,
) -> Result<Vec<MetricReport<T>>> {
    test_points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let run = || -> Result<MetricReport<T>> {
                let reference = seeds.seeds().iter().map(|&s| sim.evaluate(x, s)).collect::<Result<Vec<T>>>()?;
                let predicted = emu.predict_samples(x)?;
                compare(&predicted, &reference, bins, alpha)
            };
            run().map_err(|e| e.context(format_args!("test point {i}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{lhs_sample, ParameterSpace};
    use crate::emulator::fit_pathway_a;
    use crate::simulators::{sample_trajectories, ToyProcess3D};
    use crate::surrogates::SurrogateKind;

    fn toy(m: usize, n: usize) -> TrajectoryMatrix<f64> {
        let space = ParameterSpace::cube(3, 0.0, 2.0).unwrap();
        let doe = lhs_sample(&space, m, 11).unwrap();
        sample_trajectories(&ToyProcess3D::new(), &doe, &SeedRegistry::consecutive(n)).unwrap()
    }

    #[test]
    fn fold_sizes() {
        let order: Vec<usize> = (0..30).collect();
        assert!(split_folds(&order, 10).iter().all(|f| f.len() == 3));
        let sizes: Vec<usize> = split_folds(&(0..23).collect::<Vec<_>>(), 5).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn every_point_held_out_once_per_repetition() {
        let data = toy(12, 20);
        let plan = ValidationPlan::new(4, 3, EmulatorConfig::eigvec(SurrogateKind::RbfLinear));
        let run = k_fold_validate(&data, &plan, 5).unwrap();
        assert_eq!(run.records.len(), 36);
        for rep in 0..3 {
            let mut pts: Vec<usize> = run.records.iter().filter(|r| r.repetition == rep).map(|r| r.point).collect();
            pts.sort();
            assert_eq!(pts, (0..12).collect::<Vec<_>>());
        }
        let naive = run.records.iter().map(|r| r.report.hist_intersection).sum::<f64>() / 36.0;
        assert!((run.summary.metrics.hist_intersection.mean - naive).abs() < 1e-12);
        let again = k_fold_validate(&data, &plan, 5).unwrap();
        assert_eq!(again.summary, run.summary);
        assert_eq!(again.records, run.records);
    }

    #[test]
    fn too_small_training_folds_fail_before_fitting() {
        let data = toy(6, 10);
        let plan = ValidationPlan::new(2, 1, EmulatorConfig::eigvec(SurrogateKind::Pce(3)));
        assert!(matches!(k_fold_validate(&data, &plan, 1), Err(Error::Config(_))));
        let plan = ValidationPlan::new(7, 1, EmulatorConfig::eigvec(SurrogateKind::RbfLinear));
        assert!(matches!(k_fold_validate(&data, &plan, 1), Err(Error::Config(_))));
    }

    #[test]
    fn design_points_score_perfectly() {
        let data = toy(10, 30);
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0).unwrap();
        let sim = ToyProcess3D::new();
        let reports = test_point_evaluate(&emu, &sim, &data.coords()[..3], data.seeds(), 20, 0.05).unwrap();
        for r in reports {
            assert!(r.hist_intersection > 1.0 - 1e-12 && r.hellinger < 1e-6 && !r.ks_reject, "{r:?}");
        }
        assert!(test_point_evaluate(&emu, &sim, &[], data.seeds(), 20, 0.05).unwrap().is_empty());
    }

    #[test]
    fn stat_matches_direct_formulas() {
        let s = Stat::of(&[1.0, 2.0, 4.0]);
        assert!((s.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!((s.std - (((1.0f64 - 7.0 / 3.0).powi(2) + (2.0f64 - 7.0 / 3.0).powi(2) + (4.0f64 - 7.0 / 3.0).powi(2)) / 2.0).sqrt()).abs() < 1e-15);
    }
}
