//! Exact data-unit arithmetic.
//!
//! Subfile and segment sizes are kept as arbitrary-precision rationals so the
//! delivery accounting can be checked with exact equality. Floating values
//! coming out of the optimizer enter through [`approximate`].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Size = BigRational;

pub fn int(n: i64) -> Size {
    BigRational::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Size {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Size {
    Size::zero()
}

pub fn one() -> Size {
    Size::one()
}

/// Exact rational value of a finite float.
pub fn exact(x: f64) -> Size {
    BigRational::from_float(x).expect("finite float")
}

/// Simplest rational within `tol` of `x`, found by continued fractions.
///
/// Optimizer output such as `4 * 0.3 = 1.2000000000000002` maps back to
/// `6/5`; values with no short expansion fall back to [`exact`].
pub fn approximate(x: f64, tol: f64) -> Size {
    let negative = x < 0.0;
    let target = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut rest = target;
    for _ in 0..64 {
        let a = rest.floor();
        if a > 1e15 {
            break;
        }
        let a = a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > 1_000_000_000_000 {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if (target - p1 as f64 / q1 as f64).abs() <= tol {
            let value = BigRational::new(BigInt::from(p1), BigInt::from(q1));
            return if negative { -value } else { value };
        }
        let f = rest - a as f64;
        if f <= 0.0 {
            break;
        }
        rest = 1.0 / f;
    }
    exact(x)
}

pub fn to_f64(x: &Size) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Largest integer not above `x`, as `usize`. `x` must be nonnegative.
pub fn floor_usize(x: &Size) -> usize {
    x.floor().to_integer().to_usize().expect("nonnegative gain")
}

/// Serde adapter writing a rational as the string `"n/d"` (or `"n"`).
pub mod serde_size {
    use super::Size;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Size, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Size, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse::<Size>().map_err(serde::de::Error::custom)
    }
}
