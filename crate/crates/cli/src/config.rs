//! Effective run configuration: defaults, then the TOML file, then flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use klemu::design::ParameterSpace;
use klemu::emulator::{EmulatorConfig, Pathway};
use klemu::simulators::{GaussianSineProcess, StochasticSimulator, ToyProcess3D};
use klemu::surrogates::{KernelFamily, SurrogateKind};
use klemu::validation::ValidationPlan;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Reuse the training seeds (common random numbers).
    Crn,
    /// Fresh seeds starting at `fresh_seed_start`.
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulator: String,
    /// Input dimension of `gauss-sine`; the toy is always 3-D.
    pub dims: usize,
    pub m: usize,
    pub n: usize,
    /// Seed of the design and of the cross-validation shuffles.
    pub seed: u64,
    /// First trajectory seed; trajectories use `seed_start..seed_start+n`.
    pub seed_start: u64,
    pub pathway: Pathway,
    pub surrogate: SurrogateKind,
    pub mean_surrogate: SurrogateKind,
    /// Replaces the family of a Kriging surrogate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelFamily>,
    /// Replaces the degree of a PCE surrogate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pce_degree: Option<usize>,
    pub energy: f64,
    pub bins: usize,
    pub alpha: f64,
    pub k: usize,
    pub repetitions: usize,
    pub test_points: usize,
    pub test_seed: u64,
    pub reference: Reference,
    pub fresh_seed_start: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            simulator: ToyProcess3D::<f64>::ID.to_owned(),
            dims: 2,
            m: 30,
            n: 50,
            seed: 1,
            seed_start: 0,
            pathway: Pathway::EigvecInterp,
            surrogate: SurrogateKind::default(),
            mean_surrogate: SurrogateKind::default(),
            kernel: None,
            pce_degree: None,
            energy: 1.0,
            bins: klemu::metrics::DEFAULT_BINS,
            alpha: klemu::metrics::DEFAULT_ALPHA,
            k: 10,
            repetitions: 100,
            test_points: 3000,
            test_seed: 2024,
            reference: Reference::Crn,
            fresh_seed_start: 1_000_000,
        }
    }
}

/// Flags that override configuration keys; shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Simulator id (toy3d, gauss-sine).
    #[arg(long)]
    pub simulator: Option<String>,
    #[arg(long)]
    pub dims: Option<usize>,
    /// Number of design points.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of trajectories.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed_start: Option<u64>,
    /// eigvec_interp or cov_surrogate.
    #[arg(long)]
    pub pathway: Option<Pathway>,
    /// rbf_linear, kriging[:family] or pce[:degree|auto].
    #[arg(long)]
    pub surrogate: Option<SurrogateKind>,
    #[arg(long)]
    pub mean_surrogate: Option<SurrogateKind>,
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
    #[arg(long)]
    pub pce_degree: Option<usize>,
    /// Fraction of variance kept by truncation, in (0, 1].
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub test_points: Option<usize>,
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub reference: Option<Reference>,
    #[arg(long)]
    pub fresh_seed_start: Option<u64>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($f:ident),*) => {
        $(if let Some(v) = $o.$f.clone() { $cfg.$f = v; })*
    };
}

impl RunConfig {
    /// Merges defaults, the optional file and the flags, then checks ranges.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| {
                    CliError::usage(format!("config {}: {}", p.display(), e.message()))
                })?
            }
            None => Self::default(),
        };
        apply!(cfg, o, simulator, dims, m, n, seed_start, pathway, surrogate, mean_surrogate, energy, bins, alpha, k);
        apply!(cfg, o, repetitions, test_points, test_seed, reference, fresh_seed_start);
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if o.kernel.is_some() {
            cfg.kernel = o.kernel;
        }
        if o.pce_degree.is_some() {
            cfg.pce_degree = o.pce_degree;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::usage(msg));
        if self.simulator != ToyProcess3D::<f64>::ID && self.simulator != GaussianSineProcess::<f64>::ID {
            return bad(format!("unknown simulator `{}` (toy3d, gauss-sine)", self.simulator));
        }
        if self.dims == 0 {
            return bad("dims must be at least 1".into());
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return bad(format!("energy must lie in (0, 1], got {}", self.energy));
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.test_points == 0 {
            return bad("test_points must be at least 1".into());
        }
        Ok(())
    }

    pub fn simulator(&self) -> Box<dyn StochasticSimulator<f64>> {
        if self.simulator == GaussianSineProcess::<f64>::ID {
            Box::new(GaussianSineProcess::new(self.dims).expect("dims checked"))
        } else {
            Box::new(ToyProcess3D::new())
        }
    }

    pub fn space(&self) -> ParameterSpace<f64> {
        self.simulator().input_space().clone()
    }

    pub fn surrogate_kind(&self) -> SurrogateKind {
        refine(self.surrogate, self.kernel, self.pce_degree)
    }

    pub fn emulator(&self) -> EmulatorConfig {
        EmulatorConfig {
            pathway: self.pathway,
            surrogate: self.surrogate_kind(),
            mean_surrogate: refine(self.mean_surrogate, self.kernel, None),
            energy: self.energy,
        }
    }

    pub fn validation_plan(&self) -> ValidationPlan {
        ValidationPlan { bins: self.bins, alpha: self.alpha, ..ValidationPlan::new(self.k, self.repetitions, self.emulator()) }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn refine(kind: SurrogateKind, kernel: Option<KernelFamily>, degree: Option<usize>) -> SurrogateKind {
    match (kind, kernel, degree) {
        (SurrogateKind::Kriging(_), Some(f), _) => SurrogateKind::Kriging(f),
        (SurrogateKind::Pce(_) | SurrogateKind::PceAuto, _, Some(p)) => SurrogateKind::Pce(p),
        (k, _, _) => k,
    }
}
