//! Probability scalars.
//!
//! Every model, distribution and query in this crate is generic over a
//! [`Probability`] type. The exact rational [`BigRational`] is the default
//! (see the aliases at the crate root); `f64`/`f32` instantiations exist for
//! quick approximate runs and for cross-checking.
//!
//! Support membership is the predicate everything else rests on, so the only
//! arithmetic the engine performs on masses is addition, multiplication and
//! division of non-negative values. Zero therefore stays exactly zero even for
//! floating-point scalars, and `mass > 0` is a sound support test for all of
//! them.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{Num, ToPrimitive, Zero};

use crate::error::ParseError;

/// Scalar type able to carry probability masses.
pub trait Probability: Num + Clone + Debug + Display + PartialOrd + Send + Sync + 'static {
    /// Converts an exact rational into this scalar.
    fn from_ratio(r: &BigRational) -> Self;

    fn to_f64(&self) -> f64;

    /// Equality of two masses. Exact for rationals, within a relative
    /// tolerance for floating point.
    fn same_mass(&self, other: &Self) -> bool;

    /// True for scalars whose arithmetic is exact.
    fn is_exact() -> bool;

    fn is_positive_mass(&self) -> bool {
        *self > Self::zero()
    }

    /// `p/q` rendering for rationals, shortest round-trip decimal for floats.
    fn to_mass_string(&self) -> String {
        self.to_string()
    }

    /// Parses a `p/q` or decimal string exactly, then converts.
    fn parse_mass(s: &str) -> Result<Self, ParseError> {
        parse_rational(s).map(|r| Self::from_ratio(&r))
    }
}

impl Probability for BigRational {
    fn from_ratio(r: &BigRational) -> Self {
        r.clone()
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn same_mass(&self, other: &Self) -> bool {
        self == other
    }

    fn is_exact() -> bool {
        true
    }
}

impl Probability for Rational64 {
    fn from_ratio(r: &BigRational) -> Self {
        let n = r.numer().to_i64().expect("numerator fits in i64");
        let d = r.denom().to_i64().expect("denominator fits in i64");
        Rational64::new(n, d)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn same_mass(&self, other: &Self) -> bool {
        self == other
    }

    fn is_exact() -> bool {
        true
    }
}

impl Probability for f64 {
    fn from_ratio(r: &BigRational) -> Self {
        ratio_to_f64(r)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn same_mass(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * self.abs().max(other.abs()).max(1.0)
    }

    fn is_exact() -> bool {
        false
    }
}

impl Probability for f32 {
    fn from_ratio(r: &BigRational) -> Self {
        ratio_to_f64(r) as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn same_mass(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-5 * self.abs().max(other.abs()).max(1.0)
    }

    fn is_exact() -> bool {
        false
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => ToPrimitive::to_f64(r).unwrap_or(f64::NAN),
    }
}

/// Parses `"p/q"`, an integer, or a plain decimal (`"0.9"`, `"-1.25"`, `"1e-2"`
/// is not accepted) into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, ParseError> {
    let t = s.trim();
    let bad = || ParseError::Rational(s.to_string());
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let r = BigRational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Exact `n/d` as a rational. Panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub(crate) fn sum<P: Probability>(items: impl IntoIterator<Item = P>) -> P {
    items.into_iter().fold(P::zero(), |acc, p| acc + p)
}

pub(crate) fn is_negative<P: Probability>(p: &P) -> bool {
    *p < P::zero()
}
