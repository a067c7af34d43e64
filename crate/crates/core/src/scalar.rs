//! Scalar abstraction shared by the exact and floating evaluators.

use std::fmt;
use std::ops::Neg;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

use crate::activation::SigmoidKind;
use crate::error::{Error, Result};

/// Number type a network can be evaluated over.
pub trait Scalar: Clone + fmt::Debug + PartialOrd + Num + Neg<Output = Self> + Send + Sync + 'static {
    fn from_rational(r: &BigRational) -> Self;

    /// Exact value, if finite.
    fn to_rational(&self) -> Option<BigRational>;

    fn to_f64(&self) -> f64;

    fn sigma(kind: SigmoidKind, x: &Self) -> Result<Self>;

    fn is_finite(&self) -> bool {
        true
    }

    /// `self += a * b`
    fn add_product(&mut self, a: &Self, b: &Self) {
        *self = self.clone() + a.clone() * b.clone();
    }

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sigma(kind: SigmoidKind, x: &Self) -> Result<Self> {
        match kind {
            SigmoidKind::HardTanh => {
                let one = BigRational::one();
                Ok(if *x > one {
                    one
                } else if *x < -one.clone() {
                    -one
                } else {
                    x.clone()
                })
            }
            other => Err(Error::Inexact(other.to_string())),
        }
    }

    fn add_product(&mut self, a: &Self, b: &Self) {
        if !a.is_zero() && !b.is_zero() {
            *self += a * b;
        }
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_rational(r: &BigRational) -> Self {
                ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as $t
            }

            fn to_rational(&self) -> Option<BigRational> {
                BigRational::from_float(*self)
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn sigma(kind: SigmoidKind, x: &Self) -> Result<Self> {
                Ok(kind.eval_f64(*x as f64) as $t)
            }

            fn is_finite(&self) -> bool {
                <$t>::is_finite(*self)
            }

            fn add_product(&mut self, a: &Self, b: &Self) {
                *self += a * b;
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

/// Rational helpers used throughout the constructions.
pub mod rational {
    use super::*;

    pub fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    pub fn uint(n: u64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    pub fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    /// `2^e` for any integer exponent.
    pub fn pow2(e: i64) -> BigRational {
        let p = BigInt::one() << e.unsigned_abs();
        if e >= 0 {
            BigRational::from_integer(p)
        } else {
            BigRational::new(BigInt::one(), p)
        }
    }

    pub fn floor_int(r: &BigRational) -> BigInt {
        r.floor().to_integer()
    }

    pub fn ceil_int(r: &BigRational) -> BigInt {
        r.ceil().to_integer()
    }

    /// Floor of a nonnegative rational as `u64`.
    pub fn floor_u64(r: &BigRational) -> Option<u64> {
        floor_int(r).to_u64()
    }

    /// Smallest integer `k ≥ 0` with `k² ≥ r` (for `r ≥ 0`).
    pub fn ceil_sqrt(r: &BigRational) -> BigInt {
        if !r.is_positive() {
            return BigInt::zero();
        }
        let c = ceil_int(r);
        let mut k = c.sqrt();
        if &k * &k < c {
            k += 1;
        }
        k
    }

    /// Lower and upper rational bounds on π.
    pub fn pi_bounds() -> (BigRational, BigRational) {
        let den = BigInt::from(10u64).pow(15);
        (
            BigRational::new(BigInt::from(3_141_592_653_589_793u64), den.clone()),
            BigRational::new(BigInt::from(3_141_592_653_589_794u64), den),
        )
    }

    /// `⌈log2 n⌉` with `⌈log2 1⌉ = 0`.
    pub fn ceil_log2(n: u64) -> u32 {
        if n <= 1 {
            0
        } else {
            64 - (n - 1).leading_zeros()
        }
    }

    /// Renders as `"num/den"`, always with an explicit denominator.
    pub fn to_fraction_string(r: &BigRational) -> String {
        format!("{}/{}", r.numer(), r.denom())
    }

    /// Parses `"num/den"`, integers and decimals (`-1.25`, `3e-2`) exactly.
    pub fn parse(s: &str) -> Result<BigRational> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("not a number: '{s}'"));
        if s.is_empty() {
            return Err(bad());
        }
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(BigRational::new(n, d));
        }
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => {
                let e: i64 = s[i + 1..].parse().map_err(|_| bad())?;
                (&s[..i], e)
            }
            None => (s, 0),
        };
        let (negative, digits) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let all = format!("{whole}{frac}");
        let mut value = BigInt::parse_bytes(all.as_bytes(), 10).ok_or_else(bad)?;
        if negative {
            value = -value;
        }
        let scale = exp - frac.len() as i64;
        let ten = BigInt::from(10u32);
        let r = if scale >= 0 {
            BigRational::from_integer(value * ten.pow(scale as u32))
        } else {
            BigRational::new(value, ten.pow(scale.unsigned_abs() as u32))
        };
        Ok(r)
    }

    /// Nearest rational with denominator `2^bits`.
    pub fn from_f64_dyadic(x: f64, bits: u32) -> BigRational {
        let scaled = x * (bits as f64).exp2();
        let n = BigInt::from_f64(scaled.round()).unwrap_or_else(BigInt::zero);
        BigRational::new(n, BigInt::one() << bits)
    }

    /// Sign of a rational as `-1`, `0` or `1`.
    pub fn sign(r: &BigRational) -> i32 {
        match r.numer().sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn is_integer(r: &BigRational) -> bool {
        r.denom().is_one()
    }

    /// Positive denominator and coprime parts.
    pub fn is_reduced(r: &BigRational) -> bool {
        r.denom().is_positive() && r.numer().gcd(r.denom()).is_one()
    }
}
