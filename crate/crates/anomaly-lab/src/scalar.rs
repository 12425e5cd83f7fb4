//! Scalar regimes: exact rationals for algebraic identities, `f64` for spectra.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Exact rational scalar.
pub type Q = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
{
    const EXACT: bool;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Q {
    const EXACT: bool = true;
    fn from_i64(v: i64) -> Self {
        Q::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        self.to_f64_lossy()
    }
}

trait LossyF64 {
    fn to_f64_lossy(&self) -> f64;
}

impl LossyF64 for Q {
    fn to_f64_lossy(&self) -> f64 {
        if let Some(v) = ToPrimitive::to_f64(self) {
            if v.is_finite() {
                return v;
            }
        }
        // Huge numerators and denominators: shift both down before dividing.
        let n = self.numer();
        let d = self.denom();
        let shift = n.bits().max(d.bits()).saturating_sub(1000);
        let n = (n >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (d >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    }
}

pub fn q(n: i64) -> Q {
    Q::from_i64(n)
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact dyadic embedding of a finite double.
pub fn dyadic(x: f64) -> Q {
    Q::from_float(x).expect("non-finite value cannot be embedded as a rational")
}

pub fn q_abs(x: &Q) -> Q {
    x.abs()
}

pub fn is_zero<S: Scalar>(x: &S) -> bool {
    x.is_zero()
}

/// Parse "p/q", an integer, or a decimal literal as an exact rational.
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().ok()?;
        let d: BigInt = b.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(Q::from_integer(n));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Option<Q> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut n: BigInt = digits.parse().ok()?;
    if neg {
        n = -n;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        Q::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

pub fn sign_q(s: i8) -> Q {
    if s >= 0 {
        Q::one()
    } else {
        -Q::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("3/4"), Some(qr(3, 4)));
        assert_eq!(parse_rational("-2"), Some(q(-2)));
        assert_eq!(parse_rational("0.25"), Some(qr(1, 4)));
        assert_eq!(parse_rational("1.5e1"), Some(q(15)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }

    #[test]
    fn dyadic_is_exact() {
        let x = 0.1f64;
        assert_eq!(Scalar::to_f64(&dyadic(x)), x);
        assert_eq!(dyadic(0.5), qr(1, 2));
    }
}
