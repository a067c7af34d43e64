//! Fixed-precision binary floating point wide enough to carry the label
//! encodings of the bit-extraction blocks through smooth activations.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign as FloatSign};
use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{Num, One, Zero};

use crate::activation::SigmoidKind;
use crate::error::Result;
use crate::scalar::Scalar;

/// Mantissa bits of every [`Wide`] value.
pub const WIDE_BITS: usize = 256;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

#[derive(Clone)]
pub struct Wide(BigFloat);

impl Wide {
    pub fn from_f64(x: f64) -> Self {
        Wide(BigFloat::from_f64(x, WIDE_BITS))
    }

    pub fn from_bigint(n: &BigInt) -> Self {
        let (sign, words) = n.to_u64_digits();
        if words.is_empty() {
            return Wide::zero();
        }
        let s = if sign == Sign::Minus { FloatSign::Neg } else { FloatSign::Pos };
        let exact = BigFloat::from_words(&words, s, (64 * words.len()) as i32);
        let mut v = exact;
        // rounding to the working precision keeps every value on one grid
        v.set_precision(WIDE_BITS, RM).ok();
        Wide(v)
    }

    pub fn inner(&self) -> &BigFloat {
        &self.0
    }

    pub fn abs(&self) -> Self {
        Wide(self.0.abs())
    }

    /// `floor(log2 |x|)`, or `None` for zero.
    pub fn log2_magnitude(&self) -> Option<i64> {
        if self.0.is_zero() {
            None
        } else {
            self.0.exponent().map(|e| e as i64 - 1)
        }
    }

    fn tanh(&self) -> Wide {
        match self.log2_magnitude() {
            None => Wide::zero(),
            // 1 - tanh(t) < 2^-(WIDE_BITS+1) once t > 89.5
            Some(e) if e >= 7 => {
                if self.0.is_negative() {
                    -Wide::one()
                } else {
                    Wide::one()
                }
            }
            // t - t^3/3 + 2t^5/15 - 17t^7/315 is exact to the working precision
            Some(e) if e < -(WIDE_BITS as i64) / 8 - 1 => {
                let t = self.clone();
                let t2 = t.clone() * t.clone();
                let c = |n: i64, d: i64| Wide::from_rational(&BigRational::new(n.into(), d.into()));
                let poly = c(-17, 315) * t2.clone() + c(2, 15);
                let poly = poly * t2.clone() + c(-1, 3);
                let poly = poly * t2 + Wide::one();
                t * poly
            }
            Some(_) => CONSTS.with(|cc| Wide(self.0.tanh(WIDE_BITS, RM, &mut cc.borrow_mut()))),
        }
    }

    pub fn to_decimal_string(&self) -> String {
        CONSTS.with(|cc| self.0.format(Radix::Dec, RM, &mut cc.borrow_mut()).unwrap_or_else(|_| "NaN".to_string()))
    }
}

impl fmt::Debug for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Wide({:e})", self.to_f64())
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl PartialEq for Wide {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

macro_rules! wide_binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr for Wide {
            type Output = Wide;
            fn $m(self, rhs: Wide) -> Wide {
                Wide(self.0.$f(&rhs.0, WIDE_BITS, RM))
            }
        }

        impl<'a> $tr<&'a Wide> for &'a Wide {
            type Output = Wide;
            fn $m(self, rhs: &'a Wide) -> Wide {
                Wide(self.0.$f(&rhs.0, WIDE_BITS, RM))
            }
        }
    };
}

wide_binop!(Add, add, add);
wide_binop!(Sub, sub, sub);
wide_binop!(Mul, mul, mul);
wide_binop!(Div, div, div);

impl Rem for Wide {
    type Output = Wide;
    fn rem(self, rhs: Wide) -> Wide {
        Wide(self.0.rem(&rhs.0))
    }
}

impl Neg for Wide {
    type Output = Wide;
    fn neg(self) -> Wide {
        Wide(self.0.neg())
    }
}

impl Zero for Wide {
    fn zero() -> Self {
        Wide(BigFloat::from_word(0, WIDE_BITS))
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Wide {
    fn one() -> Self {
        Wide(BigFloat::from_word(1, WIDE_BITS))
    }
}

impl Num for Wide {
    type FromStrRadixErr = crate::error::Error;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self> {
        if radix == 10 {
            Ok(Wide::from_rational(&crate::scalar::rational::parse(s)?))
        } else {
            let n = BigInt::parse_bytes(s.as_bytes(), radix)
                .ok_or_else(|| crate::error::Error::InvalidArgument(s.to_string()))?;
            Ok(Wide::from_bigint(&n))
        }
    }
}

impl Scalar for Wide {
    fn from_rational(r: &BigRational) -> Self {
        let n = Wide::from_bigint(r.numer());
        if r.denom().is_one() {
            n
        } else {
            n / Wide::from_bigint(r.denom())
        }
    }

    fn to_rational(&self) -> Option<BigRational> {
        if !Scalar::is_finite(self) {
            return None;
        }
        if self.0.is_zero() {
            return Some(BigRational::zero());
        }
        let (words, _, sign, exp, _) = self.0.as_raw_parts()?;
        let mut mantissa = BigInt::from_slice(
            Sign::Plus,
            &words.iter().flat_map(|w| [*w as u32, (*w >> 32) as u32]).collect::<Vec<_>>(),
        );
        if sign == FloatSign::Neg {
            mantissa = -mantissa;
        }
        let shift = exp as i64 - 64 * words.len() as i64;
        Some(BigRational::from_integer(mantissa) * crate::scalar::rational::pow2(shift))
    }

    fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if self.0.is_zero() {
            return 0.0;
        }
        let (words, _, sign, exp, _) = match self.0.as_raw_parts() {
            Some(p) => p,
            None => return f64::NAN,
        };
        let top = words[words.len() - 1] as f64;
        let next = if words.len() > 1 { words[words.len() - 2] as f64 } else { 0.0 };
        let m = (top + next / 18_446_744_073_709_551_616.0) / 18_446_744_073_709_551_616.0;
        let v = m * (exp as f64).exp2();
        if sign == FloatSign::Neg {
            -v
        } else {
            v
        }
    }

    fn sigma(kind: SigmoidKind, x: &Self) -> Result<Self> {
        Ok(match kind {
            SigmoidKind::Tanh => x.tanh(),
            SigmoidKind::Logistic => {
                let half = Wide::from_f64(0.5);
                let t = (x * &half).tanh();
                (Wide::one() + t) * half
            }
            SigmoidKind::HardTanh => {
                let one = Wide::one();
                if *x > one {
                    one
                } else if *x < -one.clone() {
                    -one
                } else {
                    x.clone()
                }
            }
        })
    }

    fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    fn add_product(&mut self, a: &Self, b: &Self) {
        if a.0.is_zero() || b.0.is_zero() {
            return;
        }
        let p = a.0.mul(&b.0, WIDE_BITS, RM);
        self.0 = self.0.add(&p, WIDE_BITS, RM);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational::{pow2, ratio};

    #[test]
    fn integers_and_dyadics_are_exact() {
        for r in [ratio(6, 1), ratio(-3, 8), pow2(-200) + pow2(10), ratio(0, 1)] {
            let w = Wide::from_rational(&r);
            assert_eq!(w.to_rational().unwrap(), r);
        }
    }

    #[test]
    fn conversion_to_f64() {
        for x in [1.0, -2.5, 1e-30, 3.0e20, 0.1] {
            assert_eq!(Wide::from_f64(x).to_f64(), x);
        }
        assert!((Wide::from_rational(&ratio(1, 3)).to_f64() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn tanh_paths_agree_with_f64() {
        for x in [-100.0, -3.0, -0.5, 1e-30, 0.25, 2.0, 95.0] {
            let w = Wide::sigma(SigmoidKind::Tanh, &Wide::from_f64(x)).unwrap();
            assert!((w.to_f64() - f64::tanh(x)).abs() < 1e-15, "{x}");
            let l = Wide::sigma(SigmoidKind::Logistic, &Wide::from_f64(x)).unwrap();
            assert!((l.to_f64() - SigmoidKind::Logistic.eval_f64(x)).abs() < 1e-15, "{x}");
        }
    }

    #[test]
    fn small_argument_series_matches_library_tanh() {
        let t = Wide::from_rational(&pow2(-40));
        let series = t.tanh();
        let lib = CONSTS.with(|cc| Wide(t.0.tanh(WIDE_BITS, RM, &mut cc.borrow_mut())));
        let diff = (series - lib).abs();
        assert!(diff <= Wide::from_rational(&pow2(-40 - WIDE_BITS as i64 + 2)));
    }

    #[test]
    fn arithmetic_keeps_far_below_unit_bits() {
        let big = Wide::from_rational(&pow2(40));
        let tiny = Wide::from_rational(&pow2(-150));
        let back = (big.clone() + tiny.clone()) - big;
        assert_eq!(back, tiny);
    }
}
