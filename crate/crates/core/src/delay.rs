//! Exact nonnegative rational delays.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DelayError {
    #[error("invalid delay literal `{0}`")]
    Syntax(String),
    #[error("negative delay `{0}`")]
    Negative(String),
    #[error("zero denominator in delay `{0}`")]
    ZeroDenominator(String),
    #[error("delay arithmetic overflow")]
    Overflow,
    #[error("delay difference would be negative")]
    NegativeDifference,
}

/// A delay `numerator / denominator` kept in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RationalDelay {
    numerator: u64,
    denominator: u64,
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

pub(crate) fn lcm(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

impl RationalDelay {
    pub const ZERO: RationalDelay = RationalDelay {
        numerator: 0,
        denominator: 1,
    };

    pub fn new(numerator: u64, denominator: u64) -> Result<Self, DelayError> {
        if denominator == 0 {
            return Err(DelayError::ZeroDenominator(format!("{numerator}/0")));
        }
        let g = gcd(numerator, denominator).max(1);
        Ok(RationalDelay {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    pub fn integer(value: u64) -> Self {
        RationalDelay {
            numerator: value,
            denominator: 1,
        }
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn is_zero(&self) -> bool {
        self.numerator == 0
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn checked_add(&self, other: &RationalDelay) -> Result<RationalDelay, DelayError> {
        let den = lcm(self.denominator, other.denominator).ok_or(DelayError::Overflow)?;
        let a = self
            .numerator
            .checked_mul(den / self.denominator)
            .ok_or(DelayError::Overflow)?;
        let b = other
            .numerator
            .checked_mul(den / other.denominator)
            .ok_or(DelayError::Overflow)?;
        RationalDelay::new(a.checked_add(b).ok_or(DelayError::Overflow)?, den)
    }

    /// `self - other`, which must be nonnegative.
    pub fn checked_sub(&self, other: &RationalDelay) -> Result<RationalDelay, DelayError> {
        let den = lcm(self.denominator, other.denominator).ok_or(DelayError::Overflow)?;
        let a = self
            .numerator
            .checked_mul(den / self.denominator)
            .ok_or(DelayError::Overflow)?;
        let b = other
            .numerator
            .checked_mul(den / other.denominator)
            .ok_or(DelayError::Overflow)?;
        if b > a {
            return Err(DelayError::NegativeDifference);
        }
        RationalDelay::new(a - b, den)
    }

    /// Integer `n` with `self = n / base`, if `base` is a multiple of the denominator.
    pub fn scaled_to(&self, base: u64) -> Option<u64> {
        if base % self.denominator != 0 {
            return None;
        }
        self.numerator.checked_mul(base / self.denominator)
    }
}

impl Ord for RationalDelay {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.numerator as u128 * other.denominator as u128;
        let rhs = other.numerator as u128 * self.denominator as u128;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for RationalDelay {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Default for RationalDelay {
    fn default() -> Self {
        RationalDelay::ZERO
    }
}

impl fmt::Display for RationalDelay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator == 1 {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, self.denominator)
        }
    }
}

impl fmt::Debug for RationalDelay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn parse_uint(text: &str, whole: &str) -> Result<u64, DelayError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DelayError::Syntax(whole.to_string()));
    }
    text.parse::<u64>().map_err(|_| DelayError::Overflow)
}

impl FromStr for RationalDelay {
    type Err = DelayError;

    /// Accepts `"3/2"`, `"2"`, or an exact decimal such as `"1.5"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let body = if let Some(rest) = text.strip_prefix('-') {
            let neg = rest.trim();
            // "-0" style literals are still zero.
            if neg.bytes().all(|b| b == b'0' || b == b'.' || b == b'/')
                && neg.bytes().any(|b| b == b'0')
            {
                return Ok(RationalDelay::ZERO);
            }
            return Err(DelayError::Negative(text.to_string()));
        } else {
            text.strip_prefix('+').unwrap_or(text).trim()
        };
        if let Some((n, d)) = body.split_once('/') {
            let n = parse_uint(n.trim(), text)?;
            let d = parse_uint(d.trim(), text)?;
            if d == 0 {
                return Err(DelayError::ZeroDenominator(text.to_string()));
            }
            return RationalDelay::new(n, d);
        }
        if let Some((int_part, frac_part)) = body.split_once('.') {
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(DelayError::Syntax(text.to_string()));
            }
            let int_val = if int_part.is_empty() {
                0
            } else {
                parse_uint(int_part, text)?
            };
            let frac_digits = frac_part.trim_end_matches('0');
            if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(DelayError::Syntax(text.to_string()));
            }
            if frac_digits.is_empty() {
                return Ok(RationalDelay::integer(int_val));
            }
            let scale = 10u64
                .checked_pow(frac_digits.len() as u32)
                .ok_or(DelayError::Overflow)?;
            let frac_val = parse_uint(frac_digits, text)?;
            let num = int_val
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac_val))
                .ok_or(DelayError::Overflow)?;
            return RationalDelay::new(num, scale);
        }
        Ok(RationalDelay::integer(parse_uint(body, text)?))
    }
}

/// Least common denominator of a set of delays.
pub fn common_denominator<'a, I>(delays: I) -> Option<u64>
where
    I: IntoIterator<Item = &'a RationalDelay>,
{
    delays
        .into_iter()
        .try_fold(1u64, |acc, d| lcm(acc, d.denominator))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_and_decimal_forms() {
        assert_eq!("3/2".parse::<RationalDelay>().unwrap(), RationalDelay::new(3, 2).unwrap());
        assert_eq!("1.5".parse::<RationalDelay>().unwrap(), RationalDelay::new(3, 2).unwrap());
        assert_eq!("0.40".parse::<RationalDelay>().unwrap(), RationalDelay::new(2, 5).unwrap());
        assert_eq!(".2".parse::<RationalDelay>().unwrap(), RationalDelay::new(1, 5).unwrap());
        assert_eq!("6/4".parse::<RationalDelay>().unwrap().to_string(), "3/2");
        assert_eq!("2".parse::<RationalDelay>().unwrap().to_string(), "2");
    }

    #[test]
    fn rejects_bad_literals() {
        assert!(matches!("-1".parse::<RationalDelay>(), Err(DelayError::Negative(_))));
        assert!(matches!("1/0".parse::<RationalDelay>(), Err(DelayError::ZeroDenominator(_))));
        assert!("abc".parse::<RationalDelay>().is_err());
        assert!("1e3".parse::<RationalDelay>().is_err());
        assert_eq!("-0".parse::<RationalDelay>().unwrap(), RationalDelay::ZERO);
    }

    #[test]
    fn exact_arithmetic() {
        let a: RationalDelay = "1/2".parse().unwrap();
        let b: RationalDelay = "1".parse().unwrap();
        assert_eq!(a.checked_add(&b).unwrap().to_string(), "3/2");
        assert_eq!(b.checked_sub(&a).unwrap().to_string(), "1/2");
        assert!(a.checked_sub(&b).is_err());
        let c: RationalDelay = "0.3".parse().unwrap();
        let d: RationalDelay = "0.2".parse().unwrap();
        assert_eq!(c.checked_sub(&d).unwrap().to_string(), "1/10");
        assert!(d < c);
        assert_eq!(common_denominator(&[a, c, d]), Some(10));
    }
}
