//! The KL emulator: predicts the whole output distribution of a stochastic
//! simulator at unseen inputs from frozen-seed trajectories on a design.
//!
//! Two pathways are supported. `EigvecInterp` surrogates each retained
//! eigenvector over the input space. `CovSurrogate` surrogates the covariance
//! on the doubled input `(x, y)`, evaluates it on a grid of `M*` points that
//! contains the design, and decomposes that grid matrix again.
//!
//! Either way the prediction at `x*` is the `N`-sample ensemble
//! `ŷ_k = m̂(x*) + Σ_{i<p} √λ_i ξ̂_i(ω_k) φ̂_i(x*)`.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{ParameterSpace, SeedRegistry};
use crate::empirical::{
    center, eigendecompose_clamped, is_null_mode, project_xi, truncate, CenteredData, KlBasis, Spectrum,
    TrajectoryMatrix, COV_NORM,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::surrogates::{bounding_box, Surrogate, SurrogateKind};

/// Covariance pairs above which a Kriging covariance surrogate is slow.
const KRIGING_PAIR_WARN: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    /// Surrogate every retained eigenvector.
    EigvecInterp,
    /// Surrogate the covariance and re-decompose it on a prediction grid.
    CovSurrogate,
}

impl Pathway {
    pub fn name(self) -> &'static str {
        match self {
            Self::EigvecInterp => "eigvec_interp",
            Self::CovSurrogate => "cov_surrogate",
        }
    }
}

impl std::str::FromStr for Pathway {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eigvec_interp" | "a" | "eigvec" => Ok(Self::EigvecInterp),
            "cov_surrogate" | "b" | "cov" => Ok(Self::CovSurrogate),
            other => Err(Error::Config(format!("unknown pathway `{other}` (eigvec_interp, cov_surrogate)"))),
        }
    }
}

impl std::fmt::Display for Pathway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings for [`fit_pathway_b`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovSurrogateOptions {
    /// Surrogate of `C(x, y)`; PCE of degree 3 by default.
    pub cov_kind: SurrogateKind,
    /// Surrogate of the empirical mean function.
    pub mean_kind: SurrogateKind,
    pub energy: f64,
}

impl Default for CovSurrogateOptions {
    fn default() -> Self {
        Self {
            cov_kind: SurrogateKind::Pce(crate::surrogates::DEFAULT_DEGREE),
            mean_kind: SurrogateKind::default(),
            energy: 1.0,
        }
    }
}

/// Covariance surrogate plus everything needed to decompose it again on a
/// grid extended by an off-grid prediction point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CovarianceModel<T: Real> {
    pub surrogate: Surrogate<T>,
    /// The `M*` prediction grid.
    pub grid: Vec<Vec<T>>,
    /// Grid index of every design point, in design order.
    pub doe_rows: Vec<usize>,
    /// Symmetrized surrogate covariance on the grid.
    pub grid_cov: Matrix<T>,
    /// Centered training trajectories, `M × N`.
    pub doe_centered: Matrix<T>,
    /// Negative eigenvalues clamped on the grid.
    pub clamped: usize,
}

impl<T: Real> CovarianceModel<T> {
    /// `(Ĉ(x, y) + Ĉ(y, x))/2`.
    pub fn eval_symmetric(&self, x: &[T], y: &[T]) -> T {
        let xy: Vec<T> = x.iter().chain(y).copied().collect();
        let yx: Vec<T> = y.iter().chain(x).copied().collect();
        (self.surrogate.predict(&xy) + self.surrogate.predict(&yx)) * T::of(0.5)
    }

    fn grid_index(&self, x: &[T]) -> Option<usize> {
        self.grid.iter().position(|g| {
            g.iter().zip(x).all(|(&a, &b)| (a - b).abs() <= T::tol(1e-12) * (T::one() + a.abs()))
        })
    }
}

/// A fitted, immutable emulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KlEmulator<T: Real> {
    pathway: Pathway,
    /// Design basis (eigvec_interp) or the grid basis (cov_surrogate), truncated.
    basis: KlBasis<T>,
    mode_surrogates: Vec<Surrogate<T>>,
    mean_surrogate: Surrogate<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov_model: Option<CovarianceModel<T>>,
    doe: Vec<Vec<T>>,
    surrogate_kind: SurrogateKind,
    energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    space: Option<ParameterSpace<T>>,
    seeds: SeedRegistry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    simulator: Option<String>,
}

fn check_energy(energy: f64) -> Result<()> {
    if energy > 0.0 && energy <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("truncation energy must lie in (0, 1], got {energy}")))
    }
}

fn warn_degenerate<T: Real>(basis: &KlBasis<T>) {
    let pairs = basis.degenerate_pairs();
    if !pairs.is_empty() {
        log::warn!(
            "modes {:?} have coincident eigenvalues; individual modes are rotation-ambiguous, their span is stable",
            pairs
        );
    }
}

fn fit_mean<T: Real>(kind: SurrogateKind, coords: &[Vec<T>], mean: &[T]) -> Result<Surrogate<T>> {
    Surrogate::fit(kind, coords, mean, None).map_err(|e| e.context("mean surrogate"))
}

/// Builds a basis from a clamped spectrum on some grid, with `ξ̂` projected
/// from the design rows only, then truncates it to `energy`.
fn grid_basis<T: Real>(
    grid: &[Vec<T>],
    spectrum: Spectrum<T>,
    cd: &CenteredData<T>,
    doe_rows: &[usize],
    energy: T,
) -> Result<KlBasis<T>> {
    let restricted = Spectrum { values: spectrum.values.clone(), vectors: spectrum.vectors.select_rows(doe_rows) };
    let xi = project_xi(cd, &restricted);
    let lambda_max = spectrum.values.first().copied().unwrap_or_else(T::zero);
    let active = spectrum.values.iter().take_while(|&&l| !is_null_mode(l, lambda_max)).count();
    let full = KlBasis {
        coords: grid.to_vec(),
        mean: vec![T::zero(); grid.len()],
        eigenvalues: spectrum.values,
        eigenvectors: spectrum.vectors,
        xi,
        truncation: active,
        cov_norm: COV_NORM.to_owned(),
    };
    truncate(&full, energy)
}

/// Eigenvector-surrogate pathway: decomposes the empirical covariance on the
/// design, keeps the leading modes carrying `energy` of the variance and
/// fits one surrogate per mode plus one for the mean.
pub fn fit_pathway_a<T: Real>(data: &TrajectoryMatrix<T>, kind: SurrogateKind, energy: f64) -> Result<KlEmulator<T>> {
    check_energy(energy)?;
    let min = kind.min_points(data.dims());
    if data.n_points() < min {
        return Err(Error::Config(format!(
            "surrogate {kind} needs at least {min} design points, got {}",
            data.n_points()
        )));
    }
    let full = KlBasis::from_trajectories(data)?;
    let basis = truncate(&full, T::of(energy))?;
    warn_degenerate(&basis);
    let coords = data.coords();
    let mode_surrogates = (0..basis.truncation)
        .into_par_iter()
        .map(|i| Surrogate::fit(kind, coords, &basis.mode(i), None).map_err(|e| e.context(format_args!("mode {i}"))))
        .collect::<Result<Vec<_>>>()?;
    let mean_surrogate = fit_mean(kind, coords, &basis.mean)?;
    log::debug!("fitted {} mode surrogates ({kind}) on {} points", basis.truncation, data.n_points());
    Ok(KlEmulator {
        pathway: Pathway::EigvecInterp,
        basis,
        mode_surrogates,
        mean_surrogate,
        cov_model: None,
        doe: coords.to_vec(),
        surrogate_kind: kind,
        energy,
        space: None,
        seeds: data.seeds().clone(),
        simulator: data.simulator().map(str::to_owned),
    })
}

/// Covariance-surrogate pathway. `targets` is the `M*`-point grid and must
/// contain every design point.
pub fn fit_pathway_b<T: Real>(
    data: &TrajectoryMatrix<T>,
    targets: &[Vec<T>],
    opts: &CovSurrogateOptions,
) -> Result<KlEmulator<T>> {
    check_energy(opts.energy)?;
    let coords = data.coords();
    let d = data.dims();
    if let Some(k) = targets.iter().position(|t| t.len() != d) {
        return Err(Error::Config(format!("target {k} has {} dims, expected {d}", targets[k].len())));
    }
    let doe_rows = coords
        .iter()
        .enumerate()
        .map(|(j, x)| {
            targets
                .iter()
                .position(|t| t == x)
                .ok_or_else(|| Error::Config(format!("prediction targets omit design point {j}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for (a, ta) in targets.iter().enumerate() {
        if let Some(b) = targets[..a].iter().position(|tb| tb == ta) {
            return Err(Error::Data(format!("duplicate prediction targets at indices {b},{a}")));
        }
    }

    let cd = center(data)?;
    let m = data.n_points();
    let cov = crate::empirical::empirical_covariance(&cd);
    let mut pair_inputs = Vec::with_capacity(m * m);
    let mut pair_targets = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            pair_inputs.push(coords[i].iter().chain(&coords[j]).copied().collect::<Vec<T>>());
            pair_targets.push(cov[(i, j)]);
        }
    }
    if matches!(opts.cov_kind, SurrogateKind::Kriging(_)) && pair_inputs.len() > KRIGING_PAIR_WARN {
        log::warn!("Kriging covariance surrogate on {} pairs will be slow", pair_inputs.len());
    }
    let box_d = bounding_box(targets);
    let pair_bounds: Vec<(T, T)> = box_d.iter().chain(&box_d).copied().collect();
    let surrogate = Surrogate::fit(opts.cov_kind, &pair_inputs, &pair_targets, Some(&pair_bounds))
        .map_err(|e| e.context("covariance surrogate"))?;

    let mut model = CovarianceModel {
        surrogate,
        grid: targets.to_vec(),
        doe_rows,
        grid_cov: Matrix::zeros(0, 0),
        doe_centered: cd.centered.clone(),
        clamped: 0,
    };
    let ms = targets.len();
    let mut grid_cov = Matrix::zeros(ms, ms);
    for a in 0..ms {
        for b in 0..=a {
            let v = model.eval_symmetric(&targets[a], &targets[b]);
            grid_cov[(a, b)] = v;
            grid_cov[(b, a)] = v;
        }
    }
    let (spectrum, clamped) = eigendecompose_clamped(&grid_cov)?;
    if clamped > 0 {
        log::warn!("clamped {clamped} negative eigenvalues of the surrogate covariance to zero");
    }
    let basis = grid_basis(targets, spectrum, &cd, &model.doe_rows, T::of(opts.energy))?;
    warn_degenerate(&basis);
    model.grid_cov = grid_cov;
    model.clamped = clamped;

    let mean_surrogate = fit_mean(opts.mean_kind, coords, &cd.mean)?;
    let mut basis = basis;
    basis.mean = targets.iter().map(|x| mean_surrogate.predict(x)).collect();
    log::debug!("covariance surrogate ({}) decomposed on {ms} grid points, {} modes kept", opts.cov_kind, basis.truncation);
    Ok(KlEmulator {
        pathway: Pathway::CovSurrogate,
        basis,
        mode_surrogates: Vec::new(),
        mean_surrogate,
        cov_model: Some(model),
        doe: coords.to_vec(),
        surrogate_kind: opts.cov_kind,
        energy: opts.energy,
        space: None,
        seeds: data.seeds().clone(),
        simulator: data.simulator().map(str::to_owned),
    })
}

/// Everything needed to fit an emulator from trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulatorConfig {
    pub pathway: Pathway,
    /// Mode surrogate (eigvec_interp) or covariance surrogate (cov_surrogate).
    pub surrogate: SurrogateKind,
    /// Mean surrogate of the covariance pathway; the eigenvector pathway
    /// always uses `surrogate`.
    #[serde(default)]
    pub mean_surrogate: SurrogateKind,
    pub energy: f64,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            pathway: Pathway::EigvecInterp,
            surrogate: SurrogateKind::default(),
            mean_surrogate: SurrogateKind::default(),
            energy: 1.0,
        }
    }
}

impl EmulatorConfig {
    pub fn eigvec(surrogate: SurrogateKind) -> Self {
        Self { surrogate, ..Self::default() }
    }

    pub fn cov(surrogate: SurrogateKind) -> Self {
        Self { pathway: Pathway::CovSurrogate, surrogate, ..Self::default() }
    }

    /// Fewest design points a fit can use in `dims` input dimensions.
    pub fn min_training_points(&self, dims: usize) -> usize {
        let mean = match self.pathway {
            Pathway::EigvecInterp => self.surrogate.min_points(dims),
            Pathway::CovSurrogate => self.mean_surrogate.min_points(dims),
        };
        let modes = match self.pathway {
            Pathway::EigvecInterp => 0,
            Pathway::CovSurrogate => {
                let pairs = self.surrogate.min_points(2 * dims);
                (1..).find(|m: &usize| m * m >= pairs).expect("finite")
            }
        };
        mean.max(modes).max(2)
    }

    /// Fits on `data`. The covariance pathway decomposes on the design plus
    /// `extra_targets`.
    pub fn fit<T: Real>(&self, data: &TrajectoryMatrix<T>, extra_targets: &[Vec<T>]) -> Result<KlEmulator<T>> {
        match self.pathway {
            Pathway::EigvecInterp => fit_pathway_a(data, self.surrogate, self.energy),
            Pathway::CovSurrogate => {
                let mut targets = data.coords().to_vec();
                for t in extra_targets {
                    if !targets.contains(t) {
                        targets.push(t.clone());
                    }
                }
                let opts =
                    CovSurrogateOptions { cov_kind: self.surrogate, mean_kind: self.mean_surrogate, energy: self.energy };
                fit_pathway_b(data, &targets, &opts)
            }
        }
    }
}

/// Eigenvalues, mode values at `x*` and `ξ̂` samples used for one prediction.
struct ModeEval<'a, T: Real> {
    lambdas: Cow<'a, [T]>,
    phi: Vec<T>,
    xi: Cow<'a, Matrix<T>>,
}

impl<T: Real> KlEmulator<T> {
    /// Restricts predictions to `space`; points outside are domain errors.
    pub fn with_space(mut self, space: ParameterSpace<T>) -> Result<Self> {
        if space.dims() != self.dims() {
            return Err(Error::Config(format!(
                "parameter space has {} dims, emulator has {}",
                space.dims(),
                self.dims()
            )));
        }
        self.space = Some(space);
        Ok(self)
    }

    pub fn pathway(&self) -> Pathway {
        self.pathway
    }

    pub fn basis(&self) -> &KlBasis<T> {
        &self.basis
    }

    pub fn mode_surrogates(&self) -> &[Surrogate<T>] {
        &self.mode_surrogates
    }

    pub fn mean_surrogate(&self) -> &Surrogate<T> {
        &self.mean_surrogate
    }

    pub fn cov_model(&self) -> Option<&CovarianceModel<T>> {
        self.cov_model.as_ref()
    }

    pub fn doe(&self) -> &[Vec<T>] {
        &self.doe
    }

    pub fn surrogate_kind(&self) -> SurrogateKind {
        self.surrogate_kind
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn space(&self) -> Option<&ParameterSpace<T>> {
        self.space.as_ref()
    }

    pub fn seeds(&self) -> &SeedRegistry {
        &self.seeds
    }

    pub fn simulator(&self) -> Option<&str> {
        self.simulator.as_deref()
    }

    pub fn dims(&self) -> usize {
        self.doe[0].len()
    }

    /// Retained modes `p`.
    pub fn n_modes(&self) -> usize {
        self.basis.truncation
    }

    /// Ensemble size `N`.
    pub fn n_samples(&self) -> usize {
        self.basis.n_seeds()
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::Domain(format!("point has {} dims, emulator expects {}", x.len(), self.dims())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        match &self.space {
            Some(space) => space.check(x),
            None => Ok(()),
        }
    }

    fn modes_at(&self, x: &[T]) -> Result<ModeEval<'_, T>> {
        self.check_point(x)?;
        let p = self.basis.truncation;
        match (&self.pathway, &self.cov_model) {
            (Pathway::EigvecInterp, _) => Ok(ModeEval {
                lambdas: Cow::Borrowed(&self.basis.eigenvalues[..p]),
                phi: self.mode_surrogates.iter().map(|s| s.predict(x)).collect(),
                xi: Cow::Borrowed(&self.basis.xi),
            }),
            (Pathway::CovSurrogate, Some(model)) => {
                if let Some(g) = model.grid_index(x) {
                    return Ok(ModeEval {
                        lambdas: Cow::Borrowed(&self.basis.eigenvalues[..p]),
                        phi: (0..p).map(|i| self.basis.eigenvectors[(g, i)]).collect(),
                        xi: Cow::Borrowed(&self.basis.xi),
                    });
                }
                let aug = self.augmented_basis(model, x)?;
                let last = aug.n_points() - 1;
                let phi = (0..aug.truncation).map(|i| aug.eigenvectors[(last, i)]).collect();
                Ok(ModeEval { lambdas: Cow::Owned(aug.eigenvalues), phi, xi: Cow::Owned(aug.xi) })
            }
            (Pathway::CovSurrogate, None) => Err(Error::Config("covariance pathway without a covariance model".into())),
        }
    }

    /// Decomposes the grid extended by the off-grid point `x`, which becomes
    /// the last row.
    fn augmented_basis(&self, model: &CovarianceModel<T>, x: &[T]) -> Result<KlBasis<T>> {
        let ms = model.grid.len();
        let mut c = Matrix::zeros(ms + 1, ms + 1);
        for a in 0..ms {
            c.row_mut(a)[..ms].copy_from_slice(model.grid_cov.row(a));
            let v = model.eval_symmetric(&model.grid[a], x);
            c[(a, ms)] = v;
            c[(ms, a)] = v;
        }
        c[(ms, ms)] = model.eval_symmetric(x, x);
        let (spectrum, _) = eigendecompose_clamped(&c)?;
        let mut grid = model.grid.clone();
        grid.push(x.to_vec());
        let cd = CenteredData { centered: model.doe_centered.clone(), mean: vec![T::zero(); model.doe_rows.len()] };
        grid_basis(&grid, spectrum, &cd, &model.doe_rows, T::of(self.energy))
    }

    /// The emulated ensemble `ŷ_k`, `k = 1..N`, at `x*`.
    pub fn predict_samples(&self, x: &[T]) -> Result<Vec<T>> {
        let ev = self.modes_at(x)?;
        Ok(combine(self.mean_surrogate.predict(x), &ev.lambdas, &ev.phi, &ev.xi))
    }

    /// Like [`predict_samples`](Self::predict_samples) with the `ξ̂` samples
    /// replaced by `xi` (`p` rows, any number of columns).
    pub fn predict_with_xi(&self, x: &[T], xi: &Matrix<T>) -> Result<Vec<T>> {
        let ev = self.modes_at(x)?;
        if xi.nrows() != ev.phi.len() {
            return Err(Error::Config(format!("xi has {} rows, emulator keeps {} modes", xi.nrows(), ev.phi.len())));
        }
        Ok(combine(self.mean_surrogate.predict(x), &ev.lambdas, &ev.phi, xi))
    }

    /// `Σ_{i<p} λ_i φ̂_i(x*)²`, the emulator variance when the `ξ` are
    /// independent standard normals.
    pub fn predict_variance_gaussian(&self, x: &[T]) -> Result<T> {
        let ev = self.modes_at(x)?;
        Ok(ev.lambdas.iter().zip(&ev.phi).map(|(&l, &f)| l * f * f).sum())
    }

    /// Predicted mean `m̂(x*)`.
    pub fn predict_mean(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        Ok(self.mean_surrogate.predict(x))
    }

    /// Ensembles at many points, computed in parallel and returned in order.
    pub fn predict_many(&self, points: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.predict_samples(x).map_err(|e| e.context(format_args!("point {i}"))))
            .collect()
    }
}

fn combine<T: Real>(mean: T, lambdas: &[T], phi: &[T], xi: &Matrix<T>) -> Vec<T> {
    let mut out = vec![mean; xi.ncols()];
    for (i, (&l, &f)) in lambdas.iter().zip(phi).enumerate() {
        let w = l.sqrt() * f;
        if w == T::zero() {
            continue;
        }
        for (o, &z) in out.iter_mut().zip(xi.row(i)) {
            *o += w * z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::lhs_sample;
    use crate::empirical::empirical_covariance;
    use crate::simulators::{sample_trajectories, ToyProcess3D};
    use crate::surrogates::KernelFamily;

    fn toy(m: usize, n: usize, seed: u64) -> TrajectoryMatrix<f64> {
        let sim = ToyProcess3D::<f64>::new();
        let space = ParameterSpace::cube(3, 0.0, 2.0).unwrap();
        let doe = lhs_sample(&space, m, seed).unwrap();
        sample_trajectories(&sim, &doe, &SeedRegistry::consecutive(n)).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn reproduces_training_columns_at_design_points() {
        let data = toy(30, 50, 1);
        for kind in [SurrogateKind::RbfLinear, SurrogateKind::Kriging(KernelFamily::Matern52)] {
            let emu = fit_pathway_a(&data, kind, 1.0).unwrap();
            assert!(emu.n_modes() <= 30);
            assert_eq!(emu.mode_surrogates().len(), emu.n_modes());
            for (j, x) in data.coords().iter().enumerate() {
                let y = emu.predict_samples(x).unwrap();
                let scale = data.values().row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in y.iter().zip(data.values().row(j)) {
                    assert!((a - b).abs() <= 1e-6 * scale, "{kind} point {j}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn variance_and_mean_are_consistent_off_design() {
        let data = toy(20, 40, 2);
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0).unwrap();
        for r in 0..emu.n_modes() {
            let row = emu.basis().xi.row(r);
            assert!(row.iter().sum::<f64>().abs() / 40.0 < 1e-10);
        }
        let space = ParameterSpace::cube(3, 0.0, 2.0).unwrap();
        for x in space.sample_uniform(10, 3) {
            let y = emu.predict_samples(&x).unwrap();
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m = emu.predict_mean(&x).unwrap();
            assert!((mean - m).abs() <= 1e-8 * m.abs().max(1.0));
            let g = emu.predict_variance_gaussian(&x).unwrap();
            assert!(rel_close(var, g, 1e-8), "{var} vs {g}");
        }
    }

    #[test]
    fn gaussian_variance_matches_covariance_diagonal() {
        let data = toy(15, 30, 3);
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0).unwrap();
        let c = empirical_covariance(&center(&data).unwrap());
        for (j, x) in data.coords().iter().enumerate() {
            assert!(rel_close(emu.predict_variance_gaussian(x).unwrap(), c[(j, j)], 1e-6));
        }
    }

    #[test]
    fn rank_one_data_keeps_one_mode() {
        let rows: Vec<Vec<f64>> =
            (0..6).map(|j| (0..10).map(|k| (j as f64 + 1.0) * ((k * k) as f64 - 3.0 * k as f64)).collect()).collect();
        let coords = (0..6).map(|j| vec![j as f64 / 5.0, (j * j) as f64 / 25.0]).collect();
        let data = TrajectoryMatrix::new(Matrix::from_rows(&rows).unwrap(), coords, SeedRegistry::consecutive(10)).unwrap();
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0 - 1e-12).unwrap();
        assert_eq!(emu.n_modes(), 1);
    }

    #[test]
    fn no_modes_predicts_the_mean() {
        let rows = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![0.5, 0.5, 0.5]];
        let coords = vec![vec![0.0], vec![0.5], vec![1.0]];
        let data = TrajectoryMatrix::new(Matrix::from_rows(&rows).unwrap(), coords, SeedRegistry::consecutive(3)).unwrap();
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0).unwrap();
        assert_eq!(emu.n_modes(), 0);
        let y = emu.predict_samples(&[0.25]).unwrap();
        let m = emu.predict_mean(&[0.25]).unwrap();
        assert!(y.iter().all(|&v| v == m));
        assert_eq!(emu.predict_variance_gaussian(&[0.25]).unwrap(), 0.0);
    }

    #[test]
    fn refit_is_bit_identical() {
        let data = toy(12, 20, 4);
        let kind = SurrogateKind::Kriging(KernelFamily::Matern52);
        let a = serde_json::to_string(&fit_pathway_a(&data, kind, 1.0).unwrap()).unwrap();
        let b = serde_json::to_string(&fit_pathway_a(&data, kind, 1.0).unwrap()).unwrap();
        assert_eq!(a, b);
        let back: KlEmulator<f64> = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }

    #[test]
    fn pathway_b_with_interpolating_surrogate_recovers_spectrum() {
        let data = toy(12, 40, 5);
        let opts = CovSurrogateOptions { cov_kind: SurrogateKind::RbfLinear, ..Default::default() };
        let emu = fit_pathway_b(&data, data.coords(), &opts).unwrap();
        let basis = KlBasis::from_trajectories(&data).unwrap();
        let cm = emu.cov_model().unwrap();
        assert_eq!(cm.grid_cov.asymmetry(), 0.0);
        let l1 = basis.eigenvalues[0];
        for (a, b) in emu.basis().eigenvalues.iter().zip(&basis.eigenvalues) {
            assert!((a - b).abs() <= 1e-6 * l1, "{a} vs {b}");
        }
        for (j, x) in data.coords().iter().enumerate() {
            let y = emu.predict_samples(x).unwrap();
            let scale = data.values().row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in y.iter().zip(data.values().row(j)) {
                assert!((a - b).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn pathway_b_default_pce_predicts_off_grid() {
        let data = toy(30, 50, 6);
        let emu = fit_pathway_b(&data, data.coords(), &CovSurrogateOptions::default()).unwrap();
        assert!(emu.basis().eigenvalues.iter().all(|&l| l >= 0.0));
        let y = emu.predict_samples(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y.len(), 50);
        assert!(y.iter().all(|v| v.is_finite()));
        let var = emu.predict_variance_gaussian(&[1.0, 1.0, 1.0]).unwrap();
        let exact = ToyProcess3D::<f64>::covariance(&[1.0; 3], &[1.0; 3]).unwrap();
        assert!(var > 0.2 * exact && var < 5.0 * exact, "{var} vs {exact}");
    }

    #[test]
    fn pathway_b_rejects_targets_without_design() {
        let data = toy(8, 10, 7);
        let targets = data.coords()[1..].to_vec();
        let err = fit_pathway_b(&data, &targets, &CovSurrogateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("design point 0")));
    }

    #[test]
    fn domain_and_shape_checks() {
        let data = toy(10, 10, 8);
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0)
            .unwrap()
            .with_space(ParameterSpace::cube(3, 0.0, 2.0).unwrap())
            .unwrap();
        assert!(matches!(emu.predict_samples(&[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(emu.predict_samples(&[1.0, 1.0, 2.5]), Err(Error::Domain(_))));
        assert!(fit_pathway_a(&data, SurrogateKind::RbfLinear, 0.0).is_err());
    }

    #[test]
    fn gaussian_variance_matches_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr_free::standard_normal_matrix;
        let data = toy(15, 30, 9);
        let emu = fit_pathway_a(&data, SurrogateKind::RbfLinear, 1.0).unwrap();
        let x = [0.7, 1.3, 0.4];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let z = standard_normal_matrix(emu.n_modes(), 100_000, &mut rng);
        let y = emu.predict_with_xi(&x, &z).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let g = emu.predict_variance_gaussian(&x).unwrap();
        assert!((var - g).abs() <= 0.05 * g, "{var} vs {g}");
    }

    mod rand_distr_free {
        use crate::linalg::Matrix;
        use crate::simulators::{normal_quantile, open_uniform};
        use rand::RngCore;

        pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut impl RngCore) -> Matrix<f64> {
            Matrix::from_fn(rows, cols, |_, _| normal_quantile(open_uniform(rng)))
        }
    }
}
