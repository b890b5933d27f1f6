//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the emulator is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless widening / narrowing conversion from `f64` literals.
    fn of(v: f64) -> Self;

    /// Widen to `f64` (exact for both supported types).
    fn as_f64(self) -> f64;

    /// `max(tol, 1000·ε)`: a relative tolerance stated for `f64` that stays
    /// meaningful at lower precision.
    fn tol(tol: f64) -> Self {
        let floor = Self::epsilon() * Self::of(1000.0);
        Self::of(tol).max(floor)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Converts an index or count into the scalar type.
#[inline]
pub fn cast<T: Real>(n: usize) -> T {
    T::of(n as f64)
}

/// Neumaier-compensated sum; used wherever aggregate order must not matter.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
