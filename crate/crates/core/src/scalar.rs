//! Working-precision scalar types.
//!
//! All reduced-precision emulation happens on top of a native IEEE-754 binary
//! format. [`Scalar`] exposes the bit layout of that format so the rounding
//! code can stay generic over `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A native binary floating-point type usable as the working format.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Explicitly stored mantissa bits.
    const MANTISSA_BITS: u32;
    /// Exponent field width.
    const EXPONENT_BITS: u32;

    /// Raw IEEE bit pattern, zero-extended to 64 bits.
    fn to_raw(self) -> u64;
    fn from_raw(raw: u64) -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const MANTISSA_BITS: u32 = 52;
    const EXPONENT_BITS: u32 = 11;

    #[inline]
    fn to_raw(self) -> u64 {
        self.to_bits()
    }

    #[inline]
    fn from_raw(raw: u64) -> Self {
        f64::from_bits(raw)
    }
}

impl Scalar for f32 {
    const MANTISSA_BITS: u32 = 23;
    const EXPONENT_BITS: u32 = 8;

    #[inline]
    fn to_raw(self) -> u64 {
        u64::from(self.to_bits())
    }

    #[inline]
    fn from_raw(raw: u64) -> Self {
        f32::from_bits(raw as u32)
    }
}
