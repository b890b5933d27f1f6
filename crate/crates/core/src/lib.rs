//! Emulation of stochastic simulators through a discrete Karhunen–Loève
//! expansion of their trajectories.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

// NaN-rejecting comparisons and index loops are deliberate in the numerics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod scalar;

pub mod design;
pub mod empirical;
pub mod emulator;
pub mod metrics;
pub mod simulators;
pub mod storage;
pub mod surrogates;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Emulator = emulator::KlEmulator<f64>;
pub type EmulatorF32 = emulator::KlEmulator<f32>;
pub type Basis = empirical::KlBasis<f64>;
pub type BasisF32 = empirical::KlBasis<f32>;
pub type Trajectories = empirical::TrajectoryMatrix<f64>;
pub type TrajectoriesF32 = empirical::TrajectoryMatrix<f32>;
pub type Design = design::DesignOfExperiments<f64>;
pub type DesignF32 = design::DesignOfExperiments<f32>;
pub type Space = design::ParameterSpace<f64>;
pub type SpaceF32 = design::ParameterSpace<f32>;
pub type Report = metrics::MetricReport<f64>;
pub type ReportF32 = metrics::MetricReport<f32>;
