//! Scalar abstraction for grid functions.
//!
//! Grid functions, the Sobolev seminorm and the coarea decomposition are
//! written once over [`Scalar`] and instantiated with `f64`, `f32` or the
//! exact [`Rational`](crate::Rational).

use std::fmt::Debug;
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive};

use crate::dyadic::{rational_to_f64, Dyadic};

pub trait Scalar:
    Signed + FromPrimitive + PartialOrd + Clone + Debug + Sum + Send + Sync + 'static
{
    /// Exact for rationals, rounded for floats.
    fn from_dyadic(x: Dyadic) -> Self;

    fn from_u64(x: u64) -> Self {
        <Self as FromPrimitive>::from_u64(x).expect("integer out of scalar range")
    }

    fn to_f64_lossy(&self) -> f64;
}

impl Scalar for f64 {
    fn from_dyadic(x: Dyadic) -> Self {
        x.to_f64()
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_dyadic(x: Dyadic) -> Self {
        x.to_f64() as f32
    }
    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
}

impl Scalar for BigRational {
    fn from_dyadic(x: Dyadic) -> Self {
        x.to_big_rational()
    }
    fn to_f64_lossy(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Small exact rational `num/den` from integers.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Lossy conversion of any scalar for reporting.
pub fn to_f64<T: ToPrimitive>(x: &T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
