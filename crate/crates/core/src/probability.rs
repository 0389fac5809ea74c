//! Exact probabilities as arbitrary-precision rationals.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Significant digits used by [`Probability::to_decimal`] by default.
pub const DISPLAY_DIGITS: usize = 12;

/// An exact non-negative rational. Values produced by the engine and the
/// oracle lie in `[0, 1]`; intermediate arithmetic may leave that range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Probability(BigRational);

impl Probability {
    pub fn zero() -> Self {
        Probability(BigRational::zero())
    }

    pub fn one() -> Self {
        Probability(BigRational::one())
    }

    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Self {
        Probability(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_ratio(numer: BigUint, denom: BigUint) -> Self {
        Probability(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Probability(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_rational(self) -> BigRational {
        self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn complement(&self) -> Self {
        Probability(BigRational::one() - &self.0)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal rendering rounded half-up to `digits` significant digits,
    /// trailing zeros trimmed: `5/9` gives `0.555555555556`, `1` gives `1`.
    pub fn to_decimal_with(&self, digits: usize) -> String {
        render_decimal(&self.0, digits.max(1))
    }

    pub fn to_decimal(&self) -> String {
        self.to_decimal_with(DISPLAY_DIGITS)
    }
}

fn render_decimal(value: &BigRational, digits: usize) -> String {
    if value.is_zero() {
        return "0".into();
    }
    let negative = value.is_negative();
    let v = value.abs();
    let (n, d) = (v.numer().clone(), v.denom().clone());
    let ten = BigInt::from(10u32);

    // exponent e with 10^e <= v < 10^(e+1)
    let mut e: i64 = n.to_string().len() as i64 - d.to_string().len() as i64;
    let pow = |p: i64| ten.pow(p.unsigned_abs() as u32);
    let ge_pow = |e: i64| {
        if e >= 0 {
            n >= &d * pow(e)
        } else {
            &n * pow(e) >= d
        }
    };
    while !ge_pow(e) {
        e -= 1;
    }
    while ge_pow(e + 1) {
        e += 1;
    }

    // scaled = round(v * 10^(digits-1-e)), an integer with `digits` digits
    let shift = digits as i64 - 1 - e;
    let (sn, sd) = if shift >= 0 {
        (&n * pow(shift), d.clone())
    } else {
        (n.clone(), &d * pow(shift))
    };
    let mut scaled = (&sn * 2u32 + &sd) / (&sd * 2u32);
    let mut shift = shift;
    if scaled.to_string().len() > digits {
        // rounding carried into a new digit, e.g. 0.9999... -> 1.00
        scaled /= &ten;
        shift -= 1;
    }

    let raw = scaled.to_string();
    let mut out = if shift <= 0 {
        let mut s = raw;
        s.extend(std::iter::repeat_n('0', (-shift) as usize));
        s
    } else {
        let shift = shift as usize;
        if raw.len() > shift {
            let (int, frac) = raw.split_at(raw.len() - shift);
            format!("{int}.{frac}")
        } else {
            format!("0.{}{raw}", "0".repeat(shift - raw.len()))
        }
    };
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    if negative {
        out.insert(0, '-');
    }
    out
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl std::str::FromStr for Probability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<BigInt>()
                .map_err(|e| format!("{t:?}: {e}"))
        };
        match s.split_once('/') {
            Some((n, d)) => {
                let d = parse(d)?;
                if d.is_zero() {
                    return Err("zero denominator".into());
                }
                Ok(Probability(BigRational::new(parse(n)?, d)))
            }
            None => Ok(Probability(BigRational::from_integer(parse(s)?))),
        }
    }
}

impl Serialize for Probability {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Probability {
            type Output = Probability;
            fn $method(self, rhs: Probability) -> Probability {
                Probability($trait::$method(self.0, rhs.0))
            }
        }
        impl<'a> $trait<&'a Probability> for &'a Probability {
            type Output = Probability;
            fn $method(self, rhs: &'a Probability) -> Probability {
                Probability($trait::$method(&self.0, &rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl std::iter::Sum for Probability {
    fn sum<I: Iterator<Item = Probability>>(iter: I) -> Self {
        iter.fold(Probability::zero(), |a, b| a + b)
    }
}

impl std::iter::Product for Probability {
    fn product<I: Iterator<Item = Probability>>(iter: I) -> Self {
        iter.fold(Probability::one(), |a, b| a * b)
    }
}
