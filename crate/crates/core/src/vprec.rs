//! Software emulation of reduced floating-point formats.
//!
//! A [`PrecisionFormat`] describes a binary format with `p` explicit mantissa
//! bits and `e` exponent bits. Operations are carried out in the native
//! working format and their results are rounded to nearest (ties to even)
//! into the reduced format, after which the exponent is checked against the
//! format's dynamic range.
//!
//! Values whose rounded exponent falls below `e_min` flush to a signed zero.
//! When the requested exponent width is at least the working format's own,
//! the working format's range (including its subnormals) is used unchanged,
//! so `p = 52, e = 11` is the identity on `f64`.

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

pub const MIN_MANTISSA_BITS: u32 = 1;
pub const MAX_MANTISSA_BITS: u32 = 52;
pub const MIN_EXPONENT_BITS: u32 = 2;
pub const MAX_EXPONENT_BITS: u32 = 11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VprecError {
    #[error("mantissa bits must lie in [1, 52], got {0}")]
    InvalidMantissa(u32),
    #[error("exponent bits must lie in [2, 11], got {0}")]
    InvalidExponent(u32),
    #[error("{value} overflows the dynamic range of {format}")]
    RangeOverflow { value: f64, format: PrecisionFormat },
}

/// What happens when a rounded value exceeds the largest finite magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OverflowPolicy {
    #[default]
    ToInfinity,
    Saturate,
    Error,
}

/// A reduced binary floating-point format with `p` mantissa and `e` exponent bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrecisionFormat {
    p: u32,
    e: u32,
    overflow: OverflowPolicy,
}

impl PrecisionFormat {
    /// IEEE binary64.
    pub const DOUBLE: Self = Self {
        p: 52,
        e: 11,
        overflow: OverflowPolicy::ToInfinity,
    };
    /// IEEE binary32.
    pub const SINGLE: Self = Self {
        p: 23,
        e: 8,
        overflow: OverflowPolicy::ToInfinity,
    };

    pub fn new(p: u32, e: u32) -> Result<Self, VprecError> {
        if !(MIN_MANTISSA_BITS..=MAX_MANTISSA_BITS).contains(&p) {
            return Err(VprecError::InvalidMantissa(p));
        }
        if !(MIN_EXPONENT_BITS..=MAX_EXPONENT_BITS).contains(&e) {
            return Err(VprecError::InvalidExponent(e));
        }
        Ok(Self {
            p,
            e,
            overflow: OverflowPolicy::ToInfinity,
        })
    }

    pub fn with_overflow(mut self, policy: OverflowPolicy) -> Self {
        self.overflow = policy;
        self
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.p
    }

    pub fn exponent_bits(&self) -> u32 {
        self.e
    }

    pub fn overflow_policy(&self) -> OverflowPolicy {
        self.overflow
    }

    /// Total storage width: mantissa, exponent and sign bit.
    pub fn width(&self) -> u32 {
        self.p + self.e + 1
    }

    pub fn dynamic_range(&self) -> (i32, i32) {
        dynamic_range(self.e)
    }

    /// True when the format is at least as wide as the working type in both fields.
    pub fn is_identity_for<F: Scalar>(&self) -> bool {
        self.p >= F::MANTISSA_BITS && self.e >= F::EXPONENT_BITS
    }

    /// Largest finite magnitude representable in this format, as seen in `F`.
    pub fn max_finite<F: Scalar>(&self) -> F {
        let m = F::MANTISSA_BITS;
        let keep = self.p.min(m);
        let mantissa = ((1u64 << keep) - 1) << (m - keep);
        let biased = if self.e >= F::EXPONENT_BITS {
            (1u64 << F::EXPONENT_BITS) - 2
        } else {
            let bias = (1i64 << (F::EXPONENT_BITS - 1)) - 1;
            (i64::from(self.dynamic_range().1) + bias) as u64
        };
        F::from_raw((biased << m) | mantissa)
    }

    /// Rounds `x` into this format. See [`round_to_precision`].
    pub fn round<F: Scalar>(&self, x: F) -> Result<F, VprecError> {
        round_to_precision(x, *self)
    }

    pub fn rounded<F: Scalar>(&self, x: F) -> Result<RoundedValue<F>, VprecError> {
        Ok(RoundedValue {
            value: self.round(x)?,
            format: *self,
        })
    }
}

impl Default for PrecisionFormat {
    fn default() -> Self {
        Self::DOUBLE
    }
}

impl fmt::Display for PrecisionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, e={})", self.p, self.e)
    }
}

/// A value known to be representable in the format that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundedValue<F> {
    value: F,
    format: PrecisionFormat,
}

impl<F: Scalar> RoundedValue<F> {
    pub fn value(&self) -> F {
        self.value
    }

    pub fn format(&self) -> PrecisionFormat {
        self.format
    }
}

/// `(e_min, e_max)` for an exponent field of `e` bits.
pub fn dynamic_range(e: u32) -> (i32, i32) {
    let half = 1i32 << (e - 1);
    (2 - half, half - 1)
}

/// Rounds `x` to the nearest value with `p` explicit mantissa bits, ties to
/// even, then applies the format's exponent range.
///
/// Infinities and NaN pass through unchanged. Overflow follows the format's
/// [`OverflowPolicy`]; underflow below `e_min` yields a signed zero.
pub fn round_to_precision<F: Scalar>(x: F, format: PrecisionFormat) -> Result<F, VprecError> {
    if !x.is_finite() || x == F::zero() {
        return Ok(x);
    }
    let m = F::MANTISSA_BITS;
    let w = F::EXPONENT_BITS;
    let sign_mask = 1u64 << (m + w);
    let raw = x.to_raw();
    let sign = raw & sign_mask;
    let mut magnitude = raw & !sign_mask;

    if format.p < m {
        let drop = m - format.p;
        let lsb = (magnitude >> drop) & 1;
        let half = 1u64 << (drop - 1);
        // A carry out of the mantissa correctly bumps the exponent field.
        magnitude = (magnitude + half - 1 + lsb) & !((1u64 << drop) - 1);
    }

    let all_ones = (1u64 << w) - 1;
    let biased = magnitude >> m;
    if biased == all_ones {
        return overflow(x, sign != 0, format);
    }
    if format.e < w {
        let bias = (1i64 << (w - 1)) - 1;
        let exponent = biased as i64 - bias;
        let (e_min, e_max) = format.dynamic_range();
        if biased == 0 || exponent < i64::from(e_min) {
            return Ok(F::from_raw(sign));
        }
        if exponent > i64::from(e_max) {
            return overflow(x, sign != 0, format);
        }
    }
    Ok(F::from_raw(sign | magnitude))
}

fn overflow<F: Scalar>(x: F, negative: bool, format: PrecisionFormat) -> Result<F, VprecError> {
    let magnitude = match format.overflow {
        OverflowPolicy::ToInfinity => F::infinity(),
        OverflowPolicy::Saturate => format.max_finite::<F>(),
        OverflowPolicy::Error => {
            return Err(VprecError::RangeOverflow {
                value: x.to_f64_lossy(),
                format,
            })
        }
    };
    Ok(if negative { -magnitude } else { magnitude })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    #[inline]
    pub fn apply<F: Scalar>(self, a: F, b: F) -> F {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        }
    }
}

/// Computes `a op b` in the working format and rounds the result. Inputs are
/// not rounded first.
pub fn rounded_arith<F: Scalar>(op: ArithOp, a: F, b: F, format: PrecisionFormat) -> Result<F, VprecError> {
    round_to_precision(op.apply(a, b), format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fmt(p: u32, e: u32) -> PrecisionFormat {
        PrecisionFormat::new(p, e).unwrap()
    }

    #[test]
    fn widths_match_ieee() {
        assert_eq!(fmt(23, 8).width(), 32);
        assert_eq!(fmt(52, 11).width(), 64);
        assert_eq!(fmt(3, 4).width(), 8);
    }

    #[test]
    fn dynamic_ranges() {
        assert_eq!(dynamic_range(8), (-126, 127));
        assert_eq!(dynamic_range(11), (-1022, 1023));
        assert_eq!(dynamic_range(2), (0, 1));
        assert_eq!(dynamic_range(4), (-6, 7));
    }

    #[test]
    fn rejects_out_of_range_fields() {
        assert_eq!(PrecisionFormat::new(0, 8), Err(VprecError::InvalidMantissa(0)));
        assert_eq!(PrecisionFormat::new(53, 8), Err(VprecError::InvalidMantissa(53)));
        assert_eq!(PrecisionFormat::new(10, 1), Err(VprecError::InvalidExponent(1)));
        assert_eq!(PrecisionFormat::new(10, 12), Err(VprecError::InvalidExponent(12)));
    }

    #[test]
    fn powers_of_two_are_exact() {
        for p in 1..=52 {
            for e in 2..=11 {
                assert_eq!(fmt(p, e).round(1.0f64).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn nearest_and_ties() {
        assert_eq!(fmt(2, 11).round(1.7f64).unwrap(), 1.75);
        assert_eq!(fmt(1, 11).round(2.5f64).unwrap(), 2.0);
        assert_eq!(fmt(1, 11).round(3.5f64).unwrap(), 4.0);
        assert_eq!(fmt(1, 11).round(-2.5f64).unwrap(), -2.0);
        assert_eq!(fmt(3, 11).round(0.1f64).unwrap(), 0.1015625);
        assert_eq!(fmt(6, 11).round(0.4f64).unwrap(), 0.3984375);
    }

    #[test]
    fn overflow_policies() {
        let f = fmt(3, 4);
        assert_eq!(f.max_finite::<f64>(), 240.0);
        assert_eq!(f.round(300.0f64).unwrap(), f64::INFINITY);
        assert_eq!(f.round(-300.0f64).unwrap(), f64::NEG_INFINITY);
        assert_eq!(f.round(240.0f64).unwrap(), 240.0);
        // 248 is the midpoint between 240 and 256; ties go to the even mantissa 1.000
        assert_eq!(f.round(248.0f64).unwrap(), f64::INFINITY);
        assert_eq!(f.round(247.9f64).unwrap(), 240.0);
        let sat = f.with_overflow(OverflowPolicy::Saturate);
        assert_eq!(sat.round(300.0f64).unwrap(), 240.0);
        assert_eq!(sat.round(-1e300f64).unwrap(), -240.0);
        let err = f.with_overflow(OverflowPolicy::Error);
        assert!(matches!(
            err.round(300.0f64),
            Err(VprecError::RangeOverflow { value, .. }) if value == 300.0
        ));
    }

    #[test]
    fn underflow_flushes_to_signed_zero() {
        let f = fmt(3, 4);
        // smallest normal is 2^-6
        assert_eq!(f.round(2f64.powi(-6)).unwrap(), 2f64.powi(-6));
        let below = f.round(-0.6 * 2f64.powi(-6)).unwrap();
        assert_eq!(below, 0.0);
        assert!(below.is_sign_negative());
        // rounds up into the normal range
        assert_eq!(f.round(0.97 * 2f64.powi(-6)).unwrap(), 2f64.powi(-6));
        // e=2: (0, 1) range, so anything below 1 vanishes
        assert_eq!(fmt(52, 2).round(0.75f64).unwrap(), 0.0);
        assert_eq!(fmt(52, 2).round(3.5f64).unwrap(), 3.5);
        assert_eq!(fmt(52, 2).round(4.0f64).unwrap(), f64::INFINITY);
    }

    #[test]
    fn specials_pass_through() {
        let f = fmt(2, 3).with_overflow(OverflowPolicy::Error);
        assert_eq!(f.round(f64::INFINITY).unwrap(), f64::INFINITY);
        assert_eq!(f.round(f64::NEG_INFINITY).unwrap(), f64::NEG_INFINITY);
        assert!(f.round(f64::NAN).unwrap().is_nan());
        assert!(f.round(-0.0f64).unwrap().is_sign_negative());
    }

    #[test]
    fn double_is_identity_including_subnormals() {
        let f = PrecisionFormat::DOUBLE;
        for x in [f64::MIN_POSITIVE / 3.0, 5e-324, f64::MAX, -f64::MAX, 0.1, 1.0 / 3.0] {
            assert_eq!(f.round(x).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn single_format_matches_native_cast() {
        let f = PrecisionFormat::SINGLE;
        for x in [0.1f64, 1.0 / 3.0, 123456.789, -2.5e-20, 7.0e30] {
            assert_eq!(f.round(x).unwrap(), f64::from(x as f32));
        }
    }

    #[test]
    fn f32_working_format() {
        assert_eq!(fmt(2, 11).round(1.7f32).unwrap(), 1.75f32);
        assert_eq!(fmt(3, 4).round(300.0f32).unwrap(), f32::INFINITY);
        assert_eq!(fmt(52, 11).round(0.1f32).unwrap(), 0.1f32);
        assert_eq!(fmt(23, 8).round(f32::MAX).unwrap(), f32::MAX);
        assert_eq!(fmt(3, 4).max_finite::<f32>(), 240.0);
    }

    #[test]
    fn arithmetic_rounds_result_only() {
        let any = fmt(2, 5);
        assert_eq!(rounded_arith(ArithOp::Add, 0.5f64, 0.5, any).unwrap(), 1.0);
        assert_eq!(rounded_arith(ArithOp::Add, 1.0f64, 0.0625, fmt(3, 11)).unwrap(), 1.0);
        let tiny = fmt(3, 4);
        assert_eq!(rounded_arith(ArithOp::Mul, 15.0f64, 16.0, tiny).unwrap(), 240.0);
        assert_eq!(rounded_arith(ArithOp::Mul, 15.0f64, 17.0, tiny).unwrap(), f64::INFINITY);
        assert_eq!(
            rounded_arith(ArithOp::Div, 1.0f64, -0.0, tiny).unwrap(),
            f64::NEG_INFINITY
        );
        // 1.1 and 2.2 are not pre-rounded: 3.3 -> 3.25 at p=3, whereas 1.125 + 2.25 = 3.375 -> 3.5
        assert_eq!(rounded_arith(ArithOp::Add, 1.1f64, 2.2, fmt(3, 11)).unwrap(), 3.25);
    }

    #[test]
    fn rounded_value_is_fixed_point() {
        let f = fmt(4, 5);
        let r = f.rounded(0.337f64).unwrap();
        assert_eq!(f.round(r.value()).unwrap(), r.value());
        assert_eq!(r.format(), f);
    }

    fn any_format() -> impl Strategy<Value = PrecisionFormat> {
        (1u32..=52, 2u32..=11).prop_map(|(p, e)| fmt(p, e))
    }

    fn finite() -> impl Strategy<Value = f64> {
        any::<f64>().prop_filter("finite", |x| x.is_finite())
    }

    proptest! {
        #[test]
        fn idempotent(x in finite(), f in any_format()) {
            let once = f.round(x).unwrap();
            prop_assert_eq!(f.round(once).unwrap().to_bits(), once.to_bits());
        }

        #[test]
        fn identity_at_double(x in finite()) {
            prop_assert_eq!(PrecisionFormat::DOUBLE.round(x).unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn monotone(a in finite(), b in finite(), f in any_format()) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(f.round(lo).unwrap() <= f.round(hi).unwrap());
        }

        #[test]
        fn sign_symmetric(x in finite(), f in any_format()) {
            prop_assert_eq!(f.round(-x).unwrap().to_bits(), (-f.round(x).unwrap()).to_bits());
        }

        #[test]
        fn never_moves_more_than_half_ulp(x in -1e6f64..1e6, p in 1u32..=52) {
            let f = fmt(p, 11);
            let r = f.round(x).unwrap();
            if x != 0.0 {
                let ulp = 2f64.powi(x.abs().log2().floor() as i32 - p as i32);
                prop_assert!((r - x).abs() <= ulp / 2.0 * (1.0 + 1e-12));
            }
        }
    }
}
