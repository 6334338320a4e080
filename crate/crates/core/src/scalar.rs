//! Scalar abstraction for tour lengths, means and ratios.
//!
//! Distances themselves are always exact dyadics ([`DyadicDistance`]); the
//! quantities derived from them (sums, averages, ratios) are computed in a
//! caller-chosen scalar. The exact instantiation is [`Exact`], a reduced
//! `i128` rational; `f64` and `f32` are available for quick looks.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::metric::{DyadicDistance, DYADIC_EXP};

/// Exact rational scalar used for every reported quantity.
pub type Exact = Ratio<i128>;

/// An ordered field element that can absorb dyadic distances.
pub trait Scalar:
    Num + Copy + PartialOrd + Debug + Display + FromPrimitive + Send + Sync + 'static
{
    fn from_dyadic(d: DyadicDistance) -> Self;

    /// Lossless (for rationals) or binary-exact (for floats) conversion.
    fn to_big_rational(self) -> BigRational;

    fn to_f64(self) -> f64;

    /// Whether comparisons on this scalar are exact.
    fn is_exact() -> bool;

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits scalar")
    }

    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl Scalar for Exact {
    fn from_dyadic(d: DyadicDistance) -> Self {
        Ratio::new(i128::from(d.units()), 1i128 << DYADIC_EXP)
    }

    fn to_big_rational(self) -> BigRational {
        BigRational::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn is_exact() -> bool {
        true
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_dyadic(d: DyadicDistance) -> Self {
                d.units() as $t / (1u64 << DYADIC_EXP) as $t
            }

            fn to_big_rational(self) -> BigRational {
                BigRational::from_float(self).unwrap_or_else(BigRational::zero)
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn is_exact() -> bool {
                false
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

/// Renders a rational with exactly six fractional digits, rounding half away
/// from zero.
pub fn fixed6(value: &BigRational) -> String {
    let scale = BigInt::from(1_000_000u32);
    let scaled = value.numer() * &scale;
    let denom = value.denom().clone();
    let (q, r) = scaled.abs().div_rem(&denom);
    let twice: BigInt = r * 2;
    let q = if twice >= denom { q + 1 } else { q };
    let (int_part, frac) = q.div_rem(&scale);
    let sign = if value.is_negative() && !(int_part.is_zero() && frac.is_zero()) {
        "-"
    } else {
        ""
    };
    format!("{sign}{int_part}.{frac:0>6}")
}

/// Six-digit rendering of any scalar.
pub fn render<S: Scalar>(value: S) -> String {
    fixed6(&value.to_big_rational())
}

/// Reduced `p/q` (or `p` when integral) rendering.
pub fn render_exact(value: &BigRational) -> String {
    if value.denom() == &BigInt::from(1) {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Exact arithmetic mean of scalars, evaluated over big rationals.
pub fn big_mean<S: Scalar>(values: &[S]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum = values
        .iter()
        .fold(BigRational::zero(), |acc, v| acc + v.to_big_rational());
    Some(sum / BigRational::from_integer(BigInt::from(values.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn fixed6_rounds_half_up() {
        assert_eq!(fixed6(&big(1, 1)), "1.000000");
        assert_eq!(fixed6(&big(0, 1)), "0.000000");
        assert_eq!(fixed6(&big(1, 3)), "0.333333");
        assert_eq!(fixed6(&big(2, 3)), "0.666667");
        assert_eq!(fixed6(&big(1, 2_000_000)), "0.000001");
        assert_eq!(fixed6(&big(-5, 4)), "-1.250000");
        assert_eq!(fixed6(&big(1, 1 << 21)), "0.000000");
    }

    #[test]
    fn dyadic_conversion_is_exact_in_every_scalar() {
        let d = DyadicDistance::from_parts(1, 9);
        assert_eq!(Exact::from_dyadic(d), Ratio::new(1, 1 << 19));
        assert_eq!(f64::from_dyadic(d), 2f64.powi(-19));
        assert_eq!(f32::from_dyadic(d), 2f32.powi(-19));
    }

    #[test]
    fn render_exact_forms() {
        assert_eq!(render_exact(&big(4, 2)), "2");
        assert_eq!(render_exact(&big(3, 512)), "3/512");
    }
}
