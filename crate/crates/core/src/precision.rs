//! Working-precision contract for the extended-precision recursions.
//!
//! Every multiprecision value in this crate is an MPFR float carrying its own
//! significand width. A [`PrecisionSpec`] is resolved against the tilt `b` and
//! the horizon `n_max`: the delta sequence has magnitude of order `e^{-bn}`
//! while rounding errors injected early feed the constant mode of the renewal
//! recursion, so roughly `b * n_max / ln 2` bits are consumed by the time the
//! recursion reaches `n_max`.

use std::fmt;
use std::str::FromStr;

use rug::float::Round;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest precision ever used, in significand bits.
pub const MIN_BITS: u32 = 64;

/// Bits of relative accuracy that must survive at `n_max` for an explicit
/// precision to be accepted.
pub const GUARD_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PrecisionSpec {
    /// `max(64, ceil(1.5 b n_max / ln 2) + 64)` bits.
    #[default]
    Auto,
    Bits(u32),
}

impl PrecisionSpec {
    /// Resolves to a bit count for a recursion with tilt `b` run to `n_max`.
    pub fn resolve(self, b: f64, n_max: usize) -> Result<u32> {
        match self {
            PrecisionSpec::Auto => Ok(auto_bits(b, n_max)),
            PrecisionSpec::Bits(p) => {
                let p = p.max(MIN_BITS);
                let needed = required_bits(b, n_max);
                if p < needed {
                    return Err(Error::Precision(format!(
                        "{p} bits cannot resolve the delta sequence at n = {n_max} for b = {b} \
                         (need at least {needed})"
                    )));
                }
                Ok(p)
            }
        }
    }
}

impl fmt::Display for PrecisionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionSpec::Auto => f.write_str("auto"),
            PrecisionSpec::Bits(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for PrecisionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(PrecisionSpec::Auto);
        }
        match s.parse::<u32>() {
            Ok(p) if p > 0 && p <= 1 << 20 => Ok(PrecisionSpec::Bits(p)),
            _ => Err(Error::Usage(format!(
                "--precision expects \"auto\" or a bit count in 1..=1048576, got {s:?}"
            ))),
        }
    }
}

pub fn auto_bits(b: f64, n_max: usize) -> u32 {
    let b = b.max(0.0);
    let extra = (1.5 * b * n_max as f64 / std::f64::consts::LN_2).ceil();
    MIN_BITS.max(extra as u32 + 64)
}

/// Minimum precision that still leaves [`GUARD_BITS`] of relative accuracy in
/// `d(n_max)`.
pub fn required_bits(b: f64, n_max: usize) -> u32 {
    let b = b.max(0.0);
    let lost = b * n_max as f64 / std::f64::consts::LN_2 + ((n_max + 1) as f64).log2();
    lost.ceil() as u32 + GUARD_BITS
}

/// Absolute error scale of recursion outputs at index `n`: one unit in the
/// last place, accumulated linearly over `n + 1` steps.
pub fn unit_at(bits: u32, n: usize) -> Float {
    let mut u = Float::with_val(bits, 1u32);
    u >>= bits;
    u * (n as u64 + 1)
}

/// Natural log of `|x|` as `f64`; `-inf` for zero. Works far below the
/// `f64` underflow threshold.
pub fn ln_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    Float::with_val(x.prec().min(256), x.abs_ref()).ln().to_f64()
}

/// Full-precision decimal rendering (round-trips at the value's precision).
pub fn to_decimal(x: &Float) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let digits = (x.prec() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1;
    x.to_string_radix_round(10, Some(digits), Round::Nearest)
}

/// Parses a decimal string produced by [`to_decimal`] at the given precision.
pub fn from_decimal(s: &str, bits: u32) -> Result<Float> {
    Float::parse(s.trim())
        .map(|v| Float::with_val(bits, v))
        .map_err(|e| Error::Usage(format!("invalid decimal {s:?}: {e}")))
}

/// `f64` fields as shortest round-trip decimal strings (`inf`, `NaN` allowed).
pub mod decimal_f64 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{x:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.trim().parse::<f64>().map_err(|_| D::Error::custom(format!("not a decimal number: {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_rule() {
        assert_eq!(auto_bits(0.0, 1000), 64);
        // 1.5 * 0.5 * 1000 / ln 2 = 1082.02...
        assert_eq!(auto_bits(0.5, 1000), 1083 + 64);
        assert!(auto_bits(0.5, 1000) >= required_bits(0.5, 1000));
    }

    #[test]
    fn explicit_bits_too_small() {
        assert!(matches!(
            PrecisionSpec::Bits(64).resolve(0.5, 1000),
            Err(Error::Precision(_))
        ));
        assert_eq!(PrecisionSpec::Bits(2000).resolve(0.5, 1000).unwrap(), 2000);
    }

    #[test]
    fn parse() {
        assert_eq!("auto".parse::<PrecisionSpec>().unwrap(), PrecisionSpec::Auto);
        assert_eq!("256".parse::<PrecisionSpec>().unwrap(), PrecisionSpec::Bits(256));
        assert!("-3".parse::<PrecisionSpec>().is_err());
        assert!("".parse::<PrecisionSpec>().is_err());
    }

    #[test]
    fn decimal_round_trip() {
        let x = Float::with_val(300, 2u32).sqrt() / 7u32;
        let back = from_decimal(&to_decimal(&x), 300).unwrap();
        assert_eq!(x, back);
    }

    #[test]
    fn ln_abs_below_f64_range() {
        let mut x = Float::with_val(128, 1u32);
        x >>= 2000;
        let expect = -2000.0 * std::f64::consts::LN_2;
        assert!((ln_abs(&x) - expect).abs() < 1e-9);
        assert_eq!(ln_abs(&Float::new(64)), f64::NEG_INFINITY);
    }
}
