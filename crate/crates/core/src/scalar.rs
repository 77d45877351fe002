//! Floating-point scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the solvers are generic over. Implemented for `f32` and `f64`.
///
/// Tolerances quoted throughout the crate (1e-12 marginal exactness, θ = 1e-300)
/// assume `f64`; `f32` works for coarse solves only.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Saturates to ±∞ or 0 when out of range.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| if x > 0.0 { Self::infinity() } else { Self::neg_infinity() })
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Index-ascending sum. Kept explicit so totals are reproducible bit for bit.
#[inline]
pub fn ordered_sum<T: Real>(xs: &[T]) -> T {
    let mut acc = T::zero();
    for &x in xs {
        acc = acc + x;
    }
    acc
}

#[inline]
pub fn max_abs<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

#[inline]
pub fn max_value<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
}

#[inline]
pub fn min_value<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::infinity(), |m, &x| m.min(x))
}
