//! Floating-point scalar abstraction.
//!
//! Losses and the autodiff engine are generic over [`Scalar`] so the same
//! code runs in f32 for production and in f64 for finite-difference
//! verification. Reductions always accumulate in f64 regardless of the
//! scalar type, keeping results reproducible and well-conditioned.

use num_traits::Float;

/// Floating-point element type (f32 or f64).
pub trait Scalar:
    Float + Default + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite f64 fits any float type")
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self.to_f64().expect("every float widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum of `it` accumulated in f64.
#[inline]
pub fn sum_f64<S: Scalar>(it: impl Iterator<Item = S>) -> f64 {
    it.fold(0.0f64, |acc, v| acc + v.into_f64())
}
