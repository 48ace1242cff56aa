//! Exact monetary arithmetic.
//!
//! Utilities in the platoon games are built from terms like `(n - 1) / n`
//! and `beta / n`, so amounts are kept as reduced fractions of `i128`.
//! Equality between two formulas is then plain `==`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Exact rational number used for fractions, scores and money.
pub type Fraction = Ratio<i128>;

/// Builds the fraction `numer / denom`.
pub fn frac(numer: i128, denom: i128) -> Fraction {
    Ratio::new(numer, denom)
}

/// Parses `"105"`, `"-26.25"`, `"1e2"` or `"105/4"` into an exact fraction.
pub fn parse_fraction(text: &str) -> Result<Fraction, Error> {
    let text = text.trim();
    let bad = || Error::Parse(format!("not an exact number: {text:?}"));
    if let Some((n, d)) = text.split_once('/') {
        let n = parse_fraction(n)?;
        let d = parse_fraction(d)?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: i128 = all_digits.parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let pow = 10i128.checked_pow(scale.unsigned_abs()).ok_or_else(bad)?;
    let value =
        if scale >= 0 { Ratio::from_integer(numer.checked_mul(pow).ok_or_else(bad)?) } else { Ratio::new(numer, pow) };
    Ok(if negative { -value } else { value })
}

/// Formats a fraction as a terminating decimal when possible, `p/q` otherwise.
pub fn format_fraction(value: &Fraction) -> String {
    let mut denom = *value.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while denom % 2 == 0 {
        denom /= 2;
        twos += 1;
    }
    while denom % 5 == 0 {
        denom /= 5;
        fives += 1;
    }
    if denom != 1 {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let places = twos.max(fives);
    let scaled = 10i128.checked_pow(places).and_then(|p| value.numer().checked_mul(p / value.denom()));
    let Some(scaled) = scaled else {
        return format!("{}/{}", value.numer(), value.denom());
    };
    let digits = scaled.unsigned_abs().to_string();
    let sign = if value.is_negative() { "-" } else { "" };
    if places == 0 {
        return format!("{sign}{digits}");
    }
    let places = places as usize;
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int, dec) = padded.split_at(padded.len() - places);
    format!("{sign}{int}.{dec}")
}

/// An exact amount of money in SEK.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(Fraction);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    pub fn new(value: Fraction) -> Self {
        Money(value)
    }

    pub fn from_int(value: i64) -> Self {
        Money(Ratio::from_integer(value as i128))
    }

    /// `numer / denom` SEK.
    pub fn ratio(numer: i128, denom: i128) -> Self {
        Money(Ratio::new(numer, denom))
    }

    pub fn value(&self) -> Fraction {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_fraction(&self.0))
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} SEK", format_fraction(&self.0))
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fraction(s).map(Money)
    }
}

impl From<i64> for Money {
    fn from(value: i64) -> Self {
        Money::from_int(value)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Mul<Fraction> for Money {
    type Output = Money;
    fn mul(self, rhs: Fraction) -> Money {
        Money(self.0 * rhs)
    }
}

impl Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(self.0 * Ratio::from_integer(rhs as i128))
    }
}

impl Div<i64> for Money {
    type Output = Money;
    fn div(self, rhs: i64) -> Money {
        Money(self.0 / Ratio::from_integer(rhs as i128))
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |acc, x| acc + *x)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_fraction(&self.0))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserialize_fraction(deserializer).map(Money)
    }
}

struct FractionVisitor;

impl Visitor<'_> for FractionVisitor {
    type Value = Fraction;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or a string such as \"26.25\" or \"105/4\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fraction, E> {
        Ok(Ratio::from_integer(v as i128))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fraction, E> {
        Ok(Ratio::from_integer(v as i128))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Fraction, E> {
        // shortest round-trip text is the decimal the user wrote
        parse_fraction(&v.to_string()).map_err(E::custom)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Fraction, E> {
        parse_fraction(v).map_err(E::custom)
    }
}

/// Serde helper for fields holding a bare [`Fraction`].
pub fn deserialize_fraction<'de, D: Deserializer<'de>>(d: D) -> Result<Fraction, D::Error> {
    d.deserialize_any(FractionVisitor)
}

/// Serde helper for fields holding a bare [`Fraction`].
pub fn serialize_fraction<S: Serializer>(value: &Fraction, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_fraction(value))
}

/// `#[serde(with = ...)]` adapter for a bare [`Fraction`] field.
pub mod fraction_serde {
    pub use super::deserialize_fraction as deserialize;
    pub use super::serialize_fraction as serialize;
}

/// `#[serde(with = ...)]` adapter for a list of [`Fraction`]s.
pub mod fraction_vec_serde {
    use super::*;
    use serde::ser::SerializeSeq;

    #[derive(Deserialize)]
    struct Item(#[serde(deserialize_with = "deserialize_fraction")] Fraction);

    pub fn serialize<S: Serializer>(values: &[Fraction], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format_fraction(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Fraction>, D::Error> {
        let items = Vec::<Item>::deserialize(d)?;
        Ok(items.into_iter().map(|i| i.0).collect())
    }
}
