//! Scalar abstractions.
//!
//! Estimation code is written against [`Real`] (implemented for `f32` and
//! `f64`). The exact enumeration oracles in [`crate::coarsening`] only need
//! field arithmetic and are written against [`Field`], which is also
//! implemented for exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use statrs::distribution::{ContinuousCDF, Normal};

/// Floating-point scalar used by the regression and estimation code.
pub trait Real:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Literals in this crate are always representable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Exact or approximate field used by the discrete-law oracles.
pub trait Field:
    Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Largest discrepancy treated as zero when checking normalisation.
    fn tolerance() -> Self;

    fn from_ratio(num: u64, den: u64) -> Self {
        Self::from_u64(num).expect("integer representable") / Self::from_u64(den).expect("integer representable")
    }

    fn abs_diff(&self, other: &Self) -> Self {
        if self > other {
            self.clone() - other.clone()
        } else {
            other.clone() - self.clone()
        }
    }
}

impl Field for f64 {
    fn tolerance() -> Self {
        1e-9
    }
}

impl Field for f32 {
    fn tolerance() -> Self {
        1e-5
    }
}

impl Field for BigRational {
    fn tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }
}

impl Field for Ratio<i64> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

/// Logistic function `exp(x) / (1 + exp(x))`, evaluated without overflow.
pub fn expit<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    // Normal::new(0, 1) cannot fail.
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Two-sided critical value `z_{1-alpha/2}` for a confidence level `1 - alpha`.
pub fn two_sided_z(level: f64) -> f64 {
    normal_quantile(0.5 + level / 2.0)
}

pub(crate) fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

pub(crate) fn mean_square<T: Real>(xs: &[T]) -> T {
    xs.iter().map(|&x| x * x).sum::<T>() / T::from_count(xs.len())
}
