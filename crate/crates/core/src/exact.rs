//! Exact rational values with a fast path for dyadic rationals.
//!
//! Payoffs, rewards and transition probabilities are stored exactly. Most of
//! them are dyadic (`n / 2^k`), which is what the reward-bit encoding of the
//! kibitzer game relies on, but horizons that are not powers of two produce
//! rewards like `1/6`, so the underlying type is a general big rational.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseExactError;

/// An exact rational number.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(BigRational);

impl Exact {
    pub fn zero() -> Self {
        Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Exact(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Exact(BigRational::from_integer(BigInt::from(n)))
    }

    /// `numerator / 2^exponent`.
    pub fn dyadic(numerator: i64, exponent: u32) -> Self {
        Self::from_big_dyadic(BigInt::from(numerator), exponent)
    }

    pub fn from_big_dyadic(numerator: BigInt, exponent: u32) -> Self {
        Exact(BigRational::new(numerator, BigInt::one() << exponent))
    }

    /// `numerator / denominator`. Panics on a zero denominator.
    pub fn ratio(numerator: i64, denominator: i64) -> Self {
        assert!(denominator != 0, "zero denominator");
        Exact(BigRational::new(
            BigInt::from(numerator),
            BigInt::from(denominator),
        ))
    }

    /// The exact value of a finite `f64` (every finite double is dyadic).
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Exact)
    }

    pub fn from_rational(r: BigRational) -> Self {
        Exact(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Exact(self.0.abs())
    }

    /// `k` such that the reduced denominator is `2^k`, if any.
    pub fn dyadic_exponent(&self) -> Option<u32> {
        let d = self.0.denom();
        let tz = d.trailing_zeros().unwrap_or(0);
        if (d >> tz).is_one() {
            Some(tz as u32)
        } else {
            None
        }
    }

    pub fn is_dyadic(&self) -> bool {
        self.dyadic_exponent().is_some()
    }

    /// True when the value is dyadic with at most `bits` binary digits after
    /// the point.
    pub fn fits_bits(&self, bits: u32) -> bool {
        matches!(self.dyadic_exponent(), Some(k) if k <= bits)
    }

    /// Number of binary digits needed to write `|x|`: integer digits plus
    /// fractional digits for dyadic values, numerator plus denominator bits
    /// otherwise. Never less than 1.
    pub fn bit_length(&self) -> u64 {
        let bits = match self.dyadic_exponent() {
            Some(k) => {
                let int_part = self.0.abs().to_integer();
                int_part.bits() + u64::from(k)
            }
            None => self.0.numer().bits() + self.0.denom().bits(),
        };
        bits.max(1)
    }

    pub fn floor(&self) -> Self {
        Exact(self.0.floor())
    }

    /// `x - floor(x)`, always in `[0, 1)`.
    pub fn fract_floor(&self) -> Self {
        Exact(&self.0 - self.0.floor())
    }

    /// Multiply by `2^shift` (negative shifts divide).
    pub fn scale_pow2(&self, shift: i32) -> Self {
        let factor = BigInt::one() << shift.unsigned_abs();
        if shift >= 0 {
            Exact(&self.0 * BigRational::from_integer(factor))
        } else {
            Exact(&self.0 / BigRational::from_integer(factor))
        }
    }

    pub fn div_int(&self, d: i64) -> Self {
        assert!(d != 0, "division by zero");
        Exact(&self.0 / BigRational::from_integer(BigInt::from(d)))
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Exact(&self.0 * BigRational::from_integer(BigInt::from(k)))
    }

    /// Round toward zero onto the grid of multiples of `2^-bits`.
    pub fn truncate_bits(&self, bits: u32) -> Self {
        let scaled = self.scale_pow2(bits as i32);
        Exact(scaled.0.trunc()).scale_pow2(-(bits as i32))
    }

    /// Integer value, if the number is an integer that fits in `u64`.
    pub fn to_u64_exact(&self) -> Option<u64> {
        if self.0.is_integer() {
            self.0.to_integer().to_u64()
        } else {
            None
        }
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a Exact>>(items: I) -> Exact {
        items.into_iter().fold(Exact::zero(), |acc, x| &acc + x)
    }
}

impl fmt::Display for Exact {
    /// Dyadic values print as `numerator/2^k`, everything else as `p/q`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dyadic_exponent() {
            Some(k) => write!(f, "{}/2^{}", self.0.numer(), k),
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Exact {
    type Err = ParseExactError;

    /// Accepts `n`, `p/q` and `n/2^k`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParseExactError(s.to_string());
        let (num, den) = match s.split_once('/') {
            None => (s, None),
            Some((n, d)) => (n, Some(d)),
        };
        let numerator = BigInt::from_str(num.trim()).map_err(|_| bad())?;
        let denominator = match den.map(str::trim) {
            None => BigInt::one(),
            Some(d) => match d.strip_prefix("2^") {
                Some(exp) => {
                    let k: u32 = exp.parse().map_err(|_| bad())?;
                    BigInt::one() << k
                }
                None => BigInt::from_str(d).map_err(|_| bad())?,
            },
        };
        if denominator.is_zero() {
            return Err(bad());
        }
        Ok(Exact(BigRational::new(numerator, denominator)))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl<'a> $trait<&'a Exact> for &'a Exact {
            type Output = Exact;
            fn $method(self, rhs: &'a Exact) -> Exact {
                Exact($trait::$method(&self.0, &rhs.0))
            }
        }
        impl $trait for Exact {
            type Output = Exact;
            fn $method(self, rhs: Exact) -> Exact {
                Exact($trait::$method(self.0, rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact(-self.0)
    }
}

impl Neg for &Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact(-&self.0)
    }
}

/// Smallest `c >= 0` with `2^-c <= eps`, i.e. `ceil(log2(1/eps))` computed
/// without floating-point rounding.
pub fn ceil_log2_inverse(eps: f64) -> u32 {
    assert!(eps > 0.0 && eps.is_finite(), "eps must be positive");
    let eps = Exact::from_f64(eps).expect("finite");
    let mut c = 0u32;
    while Exact::dyadic(1, c) > eps {
        c += 1;
    }
    c
}

/// `ceil(log2(n))` for `n >= 1`; zero bits encode a single value.
pub fn ceil_log2(n: usize) -> u32 {
    assert!(n >= 1);
    if n == 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl PartialEq<i64> for Exact {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Exact {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0
            .partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}
