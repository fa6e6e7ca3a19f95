//! Exact dyadic rationals `m · 2^{-e}`.
//!
//! Every measure built by this crate has masses of this form, so all
//! transport costs, integrals and set masses stay exact. The mantissa is a
//! checked `i128`; arithmetic that would overflow panics instead of wrapping.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DyadicError {
    #[error("malformed dyadic literal `{0}` (expected `num/2^e`)")]
    Parse(String),
    #[error("dyadic arithmetic overflowed the 128-bit mantissa")]
    Overflow,
}

/// The value `num · 2^{-exp}`, kept in canonical form: `num` is odd, or the
/// value is zero with `exp == 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    num: i128,
    exp: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: i128, exp: i32) -> Self {
        if num == 0 {
            return Self::ZERO;
        }
        let tz = num.trailing_zeros() as i32;
        Dyadic {
            num: num >> tz,
            exp: exp - tz,
        }
    }

    pub fn from_int(v: i128) -> Self {
        Self::new(v, 0)
    }

    /// `2^e` for any integer `e`.
    pub fn pow2(e: i32) -> Self {
        Dyadic { num: 1, exp: -e }
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    /// Exponent `e` in `num · 2^{-e}`.
    pub fn exponent(&self) -> i32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn signum(&self) -> i32 {
        self.num.signum() as i32
    }

    pub fn abs(self) -> Self {
        Dyadic {
            num: self.num.abs(),
            exp: self.exp,
        }
    }

    /// Multiplies by `2^s`.
    pub fn mul_pow2(self, s: i32) -> Self {
        if self.num == 0 {
            return self;
        }
        Dyadic {
            num: self.num,
            exp: self.exp - s,
        }
    }

    /// Returns the value as an integer if it is one.
    pub fn to_integer(&self) -> Option<i128> {
        if self.exp > 0 {
            return None;
        }
        shl_checked(self.num, (-self.exp) as u32)
    }

    /// Value with the mantissa written over the given denominator exponent,
    /// i.e. the integer `m` with `self == m · 2^{-e}`, when it exists.
    pub fn scaled_to(&self, e: i32) -> Option<i128> {
        if self.num == 0 {
            return Some(0);
        }
        let s = e - self.exp;
        if s < 0 {
            None
        } else {
            shl_checked(self.num, s as u32)
        }
    }

    pub fn checked_add(self, rhs: Self) -> Option<Self> {
        if self.num == 0 {
            return Some(rhs);
        }
        if rhs.num == 0 {
            return Some(self);
        }
        let e = self.exp.max(rhs.exp);
        let a = shl_checked(self.num, (e - self.exp) as u32)?;
        let b = shl_checked(rhs.num, (e - rhs.exp) as u32)?;
        Some(Dyadic::new(a.checked_add(b)?, e))
    }

    pub fn checked_mul(self, rhs: Self) -> Option<Self> {
        let num = self.num.checked_mul(rhs.num)?;
        Some(Dyadic::new(num, self.exp.checked_add(rhs.exp)?))
    }

    pub fn to_big_rational(&self) -> BigRational {
        let num = BigInt::from(self.num);
        if self.exp >= 0 {
            BigRational::new(num, BigInt::one() << self.exp as usize)
        } else {
            BigRational::from_integer(num << (-self.exp) as usize)
        }
    }

    pub fn to_f64(&self) -> f64 {
        (self.num as f64) * 2f64.powi(-self.exp)
    }

    fn to_bigint_scaled(self, e: i32) -> BigInt {
        // assumes e >= self.exp
        BigInt::from(self.num) << (e - self.exp) as usize
    }
}

fn shl_checked(v: i128, s: u32) -> Option<i128> {
    if v == 0 {
        return Some(0);
    }
    if s >= 127 {
        return None;
    }
    let r = v.checked_mul(1i128 << s)?;
    Some(r)
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exp.max(other.exp);
        match (self.scaled_to(e), other.scaled_to(e)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.to_bigint_scaled(e).cmp(&other.to_bigint_scaled(e)),
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("dyadic overflow in add")
    }
}

impl AddAssign for Dyadic {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Self {
        Dyadic {
            num: self.num.checked_neg().expect("dyadic overflow in neg"),
            exp: self.exp,
        }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Self) -> Self {
        self.checked_mul(rhs).expect("dyadic overflow in mul")
    }
}

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Dyadic::ZERO, |a, b| a + b)
    }
}

impl Zero for Dyadic {
    fn zero() -> Self {
        Self::ZERO
    }
    fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl One for Dyadic {
    fn one() -> Self {
        Self::ONE
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Dyadic::from_int(v as i128)
    }
}

/// Prints `num/2^e`. Integers are printed over `2^0`.
impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp <= 0 {
            match self.to_integer() {
                Some(v) => write!(f, "{v}/2^0"),
                None => write!(f, "{}/2^{}", self.num, self.exp),
            }
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl FromStr for Dyadic {
    type Err = DyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || DyadicError::Parse(s.to_string());
        match s.split_once("/2^") {
            Some((num, exp)) => {
                let num: i128 = num.trim().parse().map_err(|_| err())?;
                let exp: i32 = exp.trim().parse().map_err(|_| err())?;
                Ok(Dyadic::new(num, exp))
            }
            None => s.parse::<i128>().map(Dyadic::from_int).map_err(|_| err()),
        }
    }
}

/// Unbounded exact accumulator for sums of dyadics.
///
/// Used where many trial values are aggregated; summation order does not
/// affect the result.
#[derive(Clone, Debug, Default)]
pub struct DyadicSum {
    num: BigInt,
    exp: i32,
}

impl DyadicSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: Dyadic) {
        if x.is_zero() {
            return;
        }
        if x.exp > self.exp {
            self.num <<= (x.exp - self.exp) as usize;
            self.exp = x.exp;
        }
        self.num += BigInt::from(x.num) << (self.exp - x.exp) as usize;
    }

    pub fn add_square(&mut self, x: Dyadic) {
        if x.is_zero() {
            return;
        }
        let sq = BigInt::from(x.num) * BigInt::from(x.num);
        let e = 2 * x.exp;
        if e > self.exp {
            self.num <<= (e - self.exp) as usize;
            self.exp = e;
        }
        self.num += sq << (self.exp - e) as usize;
    }

    pub fn merge(&mut self, other: &DyadicSum) {
        if other.exp > self.exp {
            self.num <<= (other.exp - self.exp) as usize;
            self.exp = other.exp;
        }
        self.num += &other.num << (self.exp - other.exp) as usize;
    }

    pub fn to_big_rational(&self) -> BigRational {
        if self.exp >= 0 {
            BigRational::new(self.num.clone(), BigInt::one() << self.exp as usize)
        } else {
            BigRational::from_integer(self.num.clone() << (-self.exp) as usize)
        }
    }
}

/// Converts an exact rational to `f64`, falling back to a scaled division for
/// operands too large for a direct conversion.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let n = r.numer();
    let d = r.denom();
    let shift = (n.bits() as i64 - d.bits() as i64).max(0) as usize;
    let scaled = BigRational::new(n.clone(), d.clone() << shift);
    scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift as i32)
}
