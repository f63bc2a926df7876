//! Floating point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the solver can run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Tolerance used when matching report coordinates against grid points.
    fn grid_tol() -> Self;

    /// Converts an `f64` constant. Never fails for finite input.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    /// `k / n` built from integers so that grid values do not drift.
    #[inline]
    fn ratio(k: u32, n: u32) -> Self {
        Self::lit(k as f64) / Self::lit(n as f64)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    /// Spacing of the finest grid on `[0, 1]` closed under `v -> 1 - v`.
    fn unit_quantum() -> Self;

    /// Rounds a value in `[0, 1]` onto [`unit_quantum`](Self::unit_quantum)
    /// multiples, so that `1 - (1 - v) == v` holds exactly.
    #[inline]
    fn quantize_unit(self) -> Self {
        let q = Self::unit_quantum();
        (self / q).round() * q
    }
}

impl Scalar for f64 {
    #[inline]
    fn grid_tol() -> Self {
        1e-12
    }

    #[inline]
    fn unit_quantum() -> Self {
        f64::EPSILON / 2.0
    }
}

impl Scalar for f32 {
    #[inline]
    fn grid_tol() -> Self {
        1e-6
    }

    #[inline]
    fn unit_quantum() -> Self {
        f32::EPSILON / 2.0
    }
}

/// Clamps into `[0, 1]`.
#[inline]
pub fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Sums in fixed-size blocks, so the result does not depend on how the
/// caller split the work across threads.
pub(crate) const REDUCE_CHUNK: usize = 4096;

/// Deterministic pairwise-by-chunk sum.
pub(crate) fn chunked_sum<T: Scalar>(values: &[T]) -> T {
    use rayon::prelude::*;
    let partial: Vec<T> = values
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().copied().fold(T::zero(), |a, b| a + b))
        .collect();
    partial.into_iter().fold(T::zero(), |a, b| a + b)
}
