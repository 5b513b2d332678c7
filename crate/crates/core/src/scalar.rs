//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the estimators are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Tolerance used when checking that a probability vector sums to one.
    fn norm_tolerance() -> Self;
}

impl Real for f32 {
    fn norm_tolerance() -> Self {
        1e-4
    }
}

impl Real for f64 {
    fn norm_tolerance() -> Self {
        1e-9
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub(crate) fn count<T: Real>(n: u64) -> T {
    T::from_u64(n).expect("count representable in scalar type")
}
