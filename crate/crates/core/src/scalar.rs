//! Scalar abstractions.
//!
//! Amplitude math is written against [`Scalar`] so the same routines run in
//! `f32` and `f64`. Complexity exponents use [`Exponent`], which is also
//! implemented for exact rationals so region boundaries can be tested without
//! rounding.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, Signed, ToPrimitive};

/// Real field used for amplitudes.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Default + Send + Sync + 'static
{
    /// Comparison tolerance for norms and amplitude equality.
    fn tolerance() -> Self;
    /// Amplitudes with squared modulus below this are dropped from sparse maps.
    fn prune_threshold() -> Self;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
    fn prune_threshold() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
    fn prune_threshold() -> Self {
        1e-7
    }
}

/// Ordered field for exponents measured in units of `n`.
pub trait Exponent: Num + Signed + PartialOrd + Clone + Debug + Send + Sync + 'static {
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Exponent for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Exponent for Ratio<i64> {
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(num, den)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}
