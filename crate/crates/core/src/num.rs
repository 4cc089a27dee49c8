//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the statistics and tree kernels are generic over.
///
/// Implemented by `f32` and `f64` through the blanket impl.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Lossy cast from `f64`, panicking only for non-finite targets that cannot
/// represent the value (never the case for f32/f64).
#[inline]
pub fn real<R: Real>(v: f64) -> R {
    R::from_f64(v).expect("f64 value representable in scalar type")
}

/// Cast a count into the scalar type.
#[inline]
pub fn real_of_usize<R: Real>(n: usize) -> R {
    R::from_usize(n).expect("usize count representable in scalar type")
}
