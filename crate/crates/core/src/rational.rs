//! Exact rational helpers shared by the statistics, orbit and digraph oracles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rational {text:?}: expected \"p/q\" or an integer")]
pub struct ParseRationalError {
    pub text: String,
}

/// `numer / denom` with both sides given as machine integers.
pub fn ratio<N: Into<BigInt>, D: Into<BigInt>>(numer: N, denom: D) -> Rational {
    Rational::new(numer.into(), denom.into())
}

pub fn from_int<N: Into<BigInt>>(n: N) -> Rational {
    Rational::from_integer(n.into())
}

/// Canonical `p/q` rendering. Integers keep the `/1` so every reported value
/// has the same shape.
pub fn format(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError {
        text: text.to_string(),
    };
    let trimmed = text.trim();
    let (numer, denom) = match trimmed.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (trimmed, "1"),
    };
    let numer: BigInt = numer.parse().map_err(|_| err())?;
    let denom: BigInt = denom.parse().map_err(|_| err())?;
    if denom.is_zero() || denom.is_negative() {
        return Err(err());
    }
    Ok(Rational::new(numer, denom))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A factor of the limiting-frequency product: zero whenever the numerator is
/// zero, whatever the denominator.
pub(crate) fn factor(numer: u64, denom: u64) -> Rational {
    if numer == 0 {
        Rational::zero()
    } else {
        ratio(numer, denom)
    }
}

pub(crate) fn is_unit_interval(r: &Rational) -> bool {
    !r.is_negative() && r <= &Rational::one()
}

pub mod serde_str {
    //! `#[serde(with = "rational::serde_str")]` for `p/q` string fields.
    use super::{format, parse, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_parse() {
        assert_eq!(format(&ratio(4, 18)), "2/9");
        assert_eq!(format(&from_int(1)), "1/1");
        assert_eq!(parse("2/9").unwrap(), ratio(2, 9));
        assert_eq!(parse(" -3/6 ").unwrap(), ratio(-1, 2));
        assert_eq!(parse("7").unwrap(), from_int(7));
        assert!(parse("1/0").is_err());
        assert!(parse("1/-2").is_err());
        assert!(parse("x/2").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn zero_numerator_absorbs_zero_denominator() {
        assert!(factor(0, 0).is_zero());
        assert_eq!(factor(2, 3), ratio(2, 3));
    }
}
