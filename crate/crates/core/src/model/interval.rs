use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of a point, used for one-sided derivatives and neighbourhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// An interval of the extended real line. Infinite endpoints are stored as
/// `f64::INFINITY` / `f64::NEG_INFINITY` and are never closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64, lower_closed: bool, upper_closed: bool) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::InvalidInterval("NaN endpoint".into()));
        }
        if lower > upper {
            return Err(Error::InvalidInterval(format!("lower {lower} > upper {upper}")));
        }
        if lower == upper && !(lower_closed && upper_closed) {
            return Err(Error::InvalidInterval(format!(
                "degenerate interval at {lower} must be closed on both ends"
            )));
        }
        Ok(Self {
            lower,
            upper,
            lower_closed: lower_closed && lower.is_finite(),
            upper_closed: upper_closed && upper.is_finite(),
        })
    }

    pub fn closed(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, true, true)
    }

    pub fn open(lower: f64, upper: f64) -> Result<Self> {
        if lower >= upper {
            return Err(Error::InvalidInterval(format!("open interval ({lower}, {upper}) is empty")));
        }
        Self::new(lower, upper, false, false)
    }

    pub fn point(x: f64) -> Result<Self> {
        Self::closed(x, x)
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            lower_closed: false,
            upper_closed: false,
        }
    }

    pub fn positive_half_line() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
            lower_closed: false,
            upper_closed: false,
        }
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lower_closed { x >= self.lower } else { x > self.lower };
        let hi_ok = if self.upper_closed { x <= self.upper } else { x < self.upper };
        lo_ok && hi_ok
    }

    /// True when `x` lies in the closure of the interval.
    pub fn closure_contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lower_closed { '[' } else { '(' };
        let r = if self.upper_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", fmt_end(self.lower), fmt_end(self.upper))
    }
}

fn fmt_end(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Parses interval notation such as `[0, 1]`, `(0, 2.5]` or `[3, +inf)`.
pub fn parse_interval(s: &str) -> Result<Interval> {
    let s = s.trim();
    let bad = || Error::InvalidInterval(format!("cannot parse interval {s:?}"));
    if s.len() < 5 {
        return Err(bad());
    }
    let lower_closed = match s.chars().next() {
        Some('[') => true,
        Some('(') => false,
        _ => return Err(bad()),
    };
    let upper_closed = match s.chars().last() {
        Some(']') => true,
        Some(')') => false,
        _ => return Err(bad()),
    };
    let inner = &s[1..s.len() - 1];
    let mut parts = inner.split(',');
    let lo = parse_endpoint(parts.next().ok_or_else(bad)?).ok_or_else(bad)?;
    let hi = parse_endpoint(parts.next().ok_or_else(bad)?).ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    if (lo.is_infinite() && lower_closed) || (hi.is_infinite() && upper_closed) {
        return Err(bad());
    }
    Interval::new(lo, hi, lower_closed, upper_closed)
}

/// Parses a numeric endpoint, accepting the sentinels `-inf`, `+inf` and `inf`.
pub fn parse_endpoint(s: &str) -> Option<f64> {
    match s.trim() {
        "-inf" => Some(f64::NEG_INFINITY),
        "+inf" | "inf" => Some(f64::INFINITY),
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let i = parse_interval("(0, 2.5]").unwrap();
        assert_eq!(i, Interval::new(0.0, 2.5, false, true).unwrap());
        assert_eq!(i.to_string(), "(0, 2.5]");
        let ray = parse_interval("[1,+inf)").unwrap();
        assert!(ray.contains(1e300));
        assert!(!ray.upper_closed);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(parse_interval("[2, 1]").is_err());
        assert!(parse_interval("[1, +inf]").is_err());
        assert!(parse_interval("0, 1").is_err());
        assert!(Interval::new(1.0, 1.0, true, false).is_err());
    }
}
