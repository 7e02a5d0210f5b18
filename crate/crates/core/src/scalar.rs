//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point element type: `f32` or `f64`.
///
/// Files on disk are always `f32`; computing in `f64` and casting back at the
/// end absorbs rounding noise from intermediate sums.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f32_exact(v: f32) -> Self;
    fn to_f32_lossy(self) -> f32;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 always casts to a float type")
    }

    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("usize always casts to a float type")
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f32_exact(v: f32) -> Self {
        v
    }
    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f32_exact(v: f32) -> Self {
        v as f64
    }
    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}
