//! Scalar abstraction shared by the trust and dynamics code.
//!
//! Trust values only need ordered field arithmetic, so the same routines run
//! over `f32`, `f64` and exact rationals. Exact instances are what the
//! fixed-point and oracle checks use when "zero" has to mean zero.

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{FromPrimitive, NumAssign, Signed, ToPrimitive};

pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Display
    + NumAssign
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// Converts an agent or sample count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Projection onto `[0, 1]`.
    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    /// Positive part `[x]_+`.
    fn positive_part(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    /// Negative part `[x]_-`, returned as a non-negative magnitude.
    fn negative_part(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            Self::zero()
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Rational64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        assert_eq!(1.19_f64.clamp_unit(), 1.0);
        assert_eq!((-0.05_f64).clamp_unit(), 0.0);
        assert_eq!(0.42_f64.clamp_unit(), 0.42);
        assert_eq!(Rational64::new(7, 5).clamp_unit(), Rational64::from_integer(1));
    }

    #[test]
    fn parts() {
        assert_eq!((-3.0_f32).negative_part(), 3.0);
        assert_eq!((-3.0_f32).positive_part(), 0.0);
        assert_eq!(Rational64::new(1, 2).positive_part(), Rational64::new(1, 2));
        assert_eq!(Rational64::new(1, 2).negative_part(), Rational64::from_integer(0));
    }
}
