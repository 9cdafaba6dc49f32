//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar the laboratory can compute with.
///
/// Implemented for `f32` and `f64`. All certified constants, bounds and
/// vector entries are carried in the scalar type of the scenario.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal (rounding to nearest for narrower types).
    fn of(value: f64) -> Self;

    /// Exact bit pattern, widened to `u64`. Used as a memo key.
    fn key_bits(self) -> u64;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(value: f64) -> Self {
        value
    }

    #[inline]
    fn key_bits(self) -> u64 {
        self.to_bits()
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn key_bits(self) -> u64 {
        u64::from(self.to_bits())
    }
}

/// Slack factor applied to strict admissibility inequalities.
pub(crate) fn strict_margin<T: Scalar>() -> T {
    T::one() - T::of(1e-12)
}
