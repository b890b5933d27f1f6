//! Frozen-seed stochastic simulators.
//!
//! A simulator maps `(x, seed)` to a real number. The seed selects one
//! realization of the internal randomness, so evaluating many inputs under
//! the same seed traces one trajectory of the process (common random
//! numbers).
//!
//! The built-in processes derive their random variables from the seed with a
//! fixed bit-level recipe so results are identical across runs and
//! platforms:
//!
//! * stream: ChaCha8 (`rand_chacha` 0.3.1) keyed with the seed as a
//!   little-endian `u64` in bytes 0..8 and zeros elsewhere, stream 0;
//! * each uniform consumes one `next_u64` word `w` and is
//!   `((w >> 11) + 0.5) · 2⁻⁵³`, which lies strictly inside (0, 1);
//! * normal variates use the inverse CDF (Wichura's AS241) of one uniform.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{DesignOfExperiments, ParameterSpace, SeedRegistry};
use crate::empirical::TrajectoryMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// A computational model whose output at fixed `x` is a random variable,
/// with its randomness selectable by seed.
pub trait StochasticSimulator<T: Real>: Send + Sync {
    /// Stable identifier recorded in artifacts.
    fn id(&self) -> &str;

    fn input_space(&self) -> &ParameterSpace<T>;

    /// Output of trajectory `seed` at `x`. Must be a pure function of its
    /// arguments.
    fn evaluate(&self, x: &[T], seed: u64) -> Result<T>;
}

/// Seeded ChaCha8 stream used by the built-in processes.
pub fn seed_stream(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One uniform draw strictly inside (0, 1).
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile (Wichura 1988, AS241 `PPND16`), accurate to
/// about 1e-16 relative over (0, 1).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_9e0,
        5.769_497_221_460_691_405_5e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_4e0,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2e0,
        5.463_784_911_164_114_369_9e0,
        1.784_826_539_917_291_335_8e0,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
    }

    if !(p > 0.0 && p < 1.0) {
        return match p {
            0.0 => f64::NEG_INFINITY,
            1.0 => f64::INFINITY,
            _ => f64::NAN,
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let v = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

/// The analytical 3-D toy process on `[0,2]³`:
/// `H(x, ω) = 100·ω₁·(exp(x₁ω₂)/10 + x₂x₃ω₃)` with `ω₁ ~ N(0,1)`,
/// `ω₂ ~ U[1,2]`, `ω₃ ~ U[0,1]`.
#[derive(Clone, Debug)]
pub struct ToyProcess3D<T: Real> {
    space: ParameterSpace<T>,
}

/// Random variables `(ω₁, ω₂, ω₃)` of one toy trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyOmega {
    pub normal: f64,
    pub rate: f64,
    pub weight: f64,
}

impl<T: Real> ToyProcess3D<T> {
    pub const ID: &'static str = "toy3d";

    pub fn new() -> Self {
        Self { space: ParameterSpace::cube(3, T::zero(), T::of(2.0)).expect("valid toy space") }
    }

    /// Draws `ω₁ = Φ⁻¹(u₁)`, `ω₂ = 1 + u₂`, `ω₃ = u₃` from the seed stream.
    pub fn omega(seed: u64) -> ToyOmega {
        let mut rng = seed_stream(seed);
        let u1 = open_uniform(&mut rng);
        let u2 = open_uniform(&mut rng);
        let u3 = open_uniform(&mut rng);
        ToyOmega { normal: normal_quantile(u1), rate: 1.0 + u2, weight: u3 }
    }

    /// Closed-form response for given random variables.
    pub fn response(x: &[T], w: ToyOmega) -> T {
        let (x1, x2, x3) = (x[0].as_f64(), x[1].as_f64(), x[2].as_f64());
        T::of(100.0 * w.normal * (0.1 * (x1 * w.rate).exp() + x2 * x3 * w.weight))
    }

    /// `E[H(x,ω)H(y,ω)]` in closed form (the process has zero mean, so this is
    /// also its covariance).
    pub fn covariance(x: &[T], y: &[T]) -> Result<T> {
        let space = Self::new().space;
        space.check(x)?;
        space.check(y)?;
        let [x1, x2, x3] = [x[0].as_f64(), x[1].as_f64(), x[2].as_f64()];
        let [y1, y2, y3] = [y[0].as_f64(), y[1].as_f64(), y[2].as_f64()];
        let c = 0.01 * uniform12_mgf(x1 + y1)
            + 0.05 * (x2 * x3 * uniform12_mgf(y1) + y2 * y3 * uniform12_mgf(x1))
            + x2 * x3 * y2 * y3 / 3.0;
        Ok(T::of(1.0e4 * c))
    }
}

impl<T: Real> Default for ToyProcess3D<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `E[exp(tU)]` for `U ~ U[1,2]`, i.e. `(e^{2t} − e^t)/t`, with the limit 1 at
/// `t = 0`.
pub fn uniform12_mgf(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        // e^t·(e^t − 1)/t = 1 + 3t/2 + 7t²/6 + O(t³)
        1.0 + 1.5 * t + 7.0 / 6.0 * t * t
    } else {
        t.exp() * t.exp_m1() / t
    }
}

impl<T: Real> StochasticSimulator<T> for ToyProcess3D<T> {
    fn id(&self) -> &str {
        Self::ID
    }

    fn input_space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    fn evaluate(&self, x: &[T], seed: u64) -> Result<T> {
        self.space.check(x)?;
        Ok(Self::response(x, Self::omega(seed)))
    }
}

/// Exactly Gaussian process on `[0,1]^d`: three sine modes of the mean
/// coordinate `s(x)` with independent standard-normal weights per seed,
/// `H(x, ω) = Σₘ aₘ zₘ sin(mπ s(x))`, `a = (1, 0.6, 0.3)`.
#[derive(Clone, Debug)]
pub struct GaussianSineProcess<T: Real> {
    space: ParameterSpace<T>,
}

impl<T: Real> GaussianSineProcess<T> {
    pub const ID: &'static str = "gauss-sine";
    pub const AMPLITUDES: [f64; 3] = [1.0, 0.6, 0.3];

    pub fn new(dims: usize) -> Result<Self> {
        Ok(Self { space: ParameterSpace::cube(dims, T::zero(), T::one())? })
    }

    fn modes(x: &[T]) -> [f64; 3] {
        let s = x.iter().map(|v| v.as_f64()).sum::<f64>() / x.len() as f64;
        let pi = std::f64::consts::PI;
        [1.0, 2.0, 3.0].map(|m| (m * pi * s).sin())
    }

    pub fn weights(seed: u64) -> [f64; 3] {
        let mut rng = seed_stream(seed);
        [(); 3].map(|_| normal_quantile(open_uniform(&mut rng)))
    }

    /// Exact covariance `Σₘ aₘ² sin(mπ s(x)) sin(mπ s(y))`.
    pub fn covariance(&self, x: &[T], y: &[T]) -> Result<T> {
        self.space.check(x)?;
        self.space.check(y)?;
        let (fx, fy) = (Self::modes(x), Self::modes(y));
        Ok(T::of((0..3).map(|m| Self::AMPLITUDES[m].powi(2) * fx[m] * fy[m]).sum()))
    }
}

impl<T: Real> StochasticSimulator<T> for GaussianSineProcess<T> {
    fn id(&self) -> &str {
        Self::ID
    }

    fn input_space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    fn evaluate(&self, x: &[T], seed: u64) -> Result<T> {
        self.space.check(x)?;
        let f = Self::modes(x);
        let z = Self::weights(seed);
        Ok(T::of((0..3).map(|m| Self::AMPLITUDES[m] * z[m] * f[m]).sum()))
    }
}

/// Evaluates every `(design point, seed)` pair. Rows may be computed in
/// parallel; the result is always assembled in design order.
pub fn sample_trajectories<T: Real, S: StochasticSimulator<T> + ?Sized>(
    sim: &S,
    doe: &DesignOfExperiments<T>,
    seeds: &SeedRegistry,
) -> Result<TrajectoryMatrix<T>> {
    if doe.is_empty() || seeds.is_empty() {
        return Err(Error::Data("cannot sample an empty design or seed registry".into()));
    }
    let rows: Vec<Vec<T>> = doe
        .points
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            seeds
                .seeds()
                .iter()
                .enumerate()
                .map(|(k, &s)| sim.evaluate(x, s).map_err(|e| e.context(format_args!("design point {j}, seed index {k}"))))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let values = Matrix::from_rows(&rows).expect("rows share the seed count");
    TrajectoryMatrix::new(values, doe.points.clone(), seeds.clone()).map(|t| t.with_simulator(sim.id()))
}
