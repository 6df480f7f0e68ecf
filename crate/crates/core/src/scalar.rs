//! Floating-point scalar abstraction: the whole numeric core works for
//! `f32` or `f64` through this trait.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

/// Scalar type for probabilities, rewards, and values: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Slack accepted on transition-row probability sums during validation.
    fn row_sum_tolerance() -> Self;

    /// Conversion from `f64`, for constants and configuration values.
    fn from_f(x: f64) -> Self {
        num_traits::FromPrimitive::from_f64(x).expect("f64 value representable in scalar type")
    }

    /// Conversion to `f64`, for serialization and reporting.
    fn to_f(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar value representable as f64")
    }
}

impl Scalar for f64 {
    fn row_sum_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    // 1e-9 is below f32 resolution near 1.0; use a few ulps instead.
    fn row_sum_tolerance() -> Self {
        1e-6
    }
}
