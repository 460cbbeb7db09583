//! Two's-complement Q-format arithmetic matching the accelerator datapath.
//!
//! Weights are Q1.7 (`i8`), activations Q5.11 (`i16`) and the MAC accumulator
//! is a 32-bit register holding 18 fractional bits, which is exactly the scale
//! of a Q1.7 x Q5.11 product. All narrowing is saturating; every saturation is
//! reported to the caller so it can be counted.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Fractional bits of a Q1.7 weight.
pub const WEIGHT_FRAC_BITS: u32 = 7;
/// Fractional bits of a Q5.11 activation.
pub const ACT_FRAC_BITS: u32 = 11;
/// Fractional bits of the 32-bit accumulator (weight frac + activation frac).
pub const ACC_FRAC_BITS: u32 = WEIGHT_FRAC_BITS + ACT_FRAC_BITS;

/// Raw Q5.11 value of 1.0.
pub const ACT_ONE: i16 = 1 << ACT_FRAC_BITS;

/// A fixed-point format. `int_bits` counts the sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: u8,
    pub frac_bits: u8,
}

impl QFormat {
    /// 8-bit weight format, range [-1, 127/128].
    pub const Q1_7: QFormat = QFormat::new(1, 7);
    /// 16-bit activation format, range [-16, 16 - 2^-11].
    pub const Q5_11: QFormat = QFormat::new(5, 11);
    /// 32-bit accumulator: sign + 13 integer bits + 18 fractional bits
    /// (conventionally written Q13.18).
    pub const ACCUMULATOR: QFormat = QFormat::new(14, 18);

    pub const fn new(int_bits: u8, frac_bits: u8) -> Self {
        assert!(int_bits >= 1, "format needs a sign bit");
        assert!(int_bits as u32 + frac_bits as u32 <= 32, "formats wider than 32 bits are not supported");
        QFormat { int_bits, frac_bits }
    }

    pub const fn total_bits(self) -> u32 {
        self.int_bits as u32 + self.frac_bits as u32
    }

    pub const fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits() - 1))
    }

    pub const fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits() - 1)) - 1
    }

    /// Value of one least-significant bit.
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    /// Storage bytes per element.
    pub fn storage_bytes(self) -> usize {
        (self.total_bits() as usize).div_ceil(8)
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

/// A raw two's-complement value tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedVal {
    raw: i32,
    fmt: QFormat,
}

impl FixedVal {
    /// Panics if `raw` does not fit the format; use [`quantize`] for
    /// saturating construction.
    pub fn from_raw(raw: i32, fmt: QFormat) -> Self {
        assert!(fmt.contains_raw(raw as i64), "raw {raw} out of range for {fmt}");
        FixedVal { raw, fmt }
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.fmt
    }

    /// Exact real value `raw * 2^-frac_bits`.
    pub fn to_f64(self) -> f64 {
        self.raw as f64 * self.fmt.resolution()
    }

    pub fn weight(raw: i8) -> Self {
        FixedVal { raw: raw as i32, fmt: QFormat::Q1_7 }
    }

    pub fn activation(raw: i16) -> Self {
        FixedVal { raw: raw as i32, fmt: QFormat::Q5_11 }
    }

    pub fn accumulator(raw: i32) -> Self {
        FixedVal { raw, fmt: QFormat::ACCUMULATOR }
    }
}

/// Result of a narrowing operation: the value plus whether it saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Saturating<T> {
    pub value: T,
    pub saturated: bool,
}

impl<T> Saturating<T> {
    fn new(value: T, saturated: bool) -> Self {
        Saturating { value, saturated }
    }
}

/// Running saturation counts, by datapath stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationCounts {
    pub quantize: u64,
    pub accumulate: u64,
    pub truncate: u64,
}

impl SaturationCounts {
    pub fn total(&self) -> u64 {
        self.quantize + self.accumulate + self.truncate
    }

    pub fn merge(&mut self, other: &SaturationCounts) {
        self.quantize += other.quantize;
        self.accumulate += other.accumulate;
        self.truncate += other.truncate;
    }
}

fn clamp_raw(v: i64, fmt: QFormat) -> Saturating<i64> {
    if v < fmt.min_raw() {
        Saturating::new(fmt.min_raw(), true)
    } else if v > fmt.max_raw() {
        Saturating::new(fmt.max_raw(), true)
    } else {
        Saturating::new(v, false)
    }
}

/// Round `x * 2^frac_bits` half-to-even and clamp into the format.
///
/// `x` must be finite.
pub fn quantize(x: f64, fmt: QFormat) -> Saturating<FixedVal> {
    debug_assert!(x.is_finite(), "quantize of non-finite value");
    let scaled = (x * (fmt.frac_bits as f64).exp2()).round_ties_even();
    // Clamp in f64 first so huge inputs cannot overflow the i64 cast.
    let bounded = scaled.clamp(fmt.min_raw() as f64 - 1.0, fmt.max_raw() as f64 + 1.0);
    let c = clamp_raw(bounded as i64, fmt);
    Saturating::new(FixedVal { raw: c.value as i32, fmt }, c.saturated)
}

/// Quantize to a Q1.7 weight.
pub fn quantize_weight(x: f64) -> Saturating<i8> {
    let q = quantize(x, QFormat::Q1_7);
    Saturating::new(q.value.raw as i8, q.saturated)
}

/// Quantize to a Q5.11 activation.
pub fn quantize_activation(x: f64) -> Saturating<i16> {
    let q = quantize(x, QFormat::Q5_11);
    Saturating::new(q.value.raw as i16, q.saturated)
}

/// Quantize a bias straight into accumulator scale.
pub fn quantize_bias(x: f64) -> Saturating<i32> {
    let q = quantize(x, QFormat::ACCUMULATOR);
    Saturating::new(q.value.raw, q.saturated)
}

/// `value / 2^shift` rounded half-to-even (convergent rounding).
pub fn round_shift_half_even(value: i64, shift: u32) -> i64 {
    if shift == 0 {
        return value;
    }
    let half_minus_one = (1i64 << (shift - 1)) - 1;
    let odd = (value >> shift) & 1;
    (value + half_minus_one + odd) >> shift
}

/// Saturating 32-bit add used by the accumulator.
#[inline]
pub fn acc_add(acc: i32, addend: i32) -> Saturating<i32> {
    match acc.checked_add(addend) {
        Some(v) => Saturating::new(v, false),
        None => Saturating::new(if addend > 0 { i32::MAX } else { i32::MIN }, true),
    }
}

/// One MAC step: `acc + w * a` with the product at 18 fractional bits.
#[inline]
pub fn mac(acc: i32, w: i8, a: i16) -> Saturating<i32> {
    // |w * a| <= 128 * 32768 = 2^22, always representable.
    acc_add(acc, w as i32 * a as i32)
}

/// Drop 7 fractional bits with convergent rounding, then saturate to Q5.11.
#[inline]
pub fn truncate_to_activation(acc: i32) -> Saturating<i16> {
    let shifted = round_shift_half_even(acc as i64, ACC_FRAC_BITS - ACT_FRAC_BITS);
    let c = clamp_raw(shifted, QFormat::Q5_11);
    Saturating::new(c.value as i16, c.saturated)
}

/// Product of two Q5.11 values narrowed back to Q5.11.
#[inline]
pub fn mul_activation(a: i16, b: i16) -> Saturating<i16> {
    narrow_q22(a as i64 * b as i64)
}

/// Narrow a value carrying 22 fractional bits (a Q5.11 x Q5.11 product or a
/// sum of them) to Q5.11.
#[inline]
pub fn narrow_q22(v: i64) -> Saturating<i16> {
    let shifted = round_shift_half_even(v, ACT_FRAC_BITS);
    let c = clamp_raw(shifted, QFormat::Q5_11);
    Saturating::new(c.value as i16, c.saturated)
}

/// Typed wrappers over [`FixedVal`], checking formats.
pub fn mac_fixed(w: FixedVal, a: FixedVal, acc: FixedVal) -> Saturating<FixedVal> {
    assert_eq!(w.fmt, QFormat::Q1_7, "MAC weight must be Q1.7");
    assert_eq!(a.fmt, QFormat::Q5_11, "MAC activation must be Q5.11");
    assert_eq!(acc.fmt, QFormat::ACCUMULATOR, "MAC accumulator must be the 32-bit accumulator format");
    let r = mac(acc.raw, w.raw as i8, a.raw as i16);
    Saturating::new(FixedVal::accumulator(r.value), r.saturated)
}

pub fn truncate_fixed(acc: FixedVal) -> Saturating<FixedVal> {
    assert_eq!(acc.fmt, QFormat::ACCUMULATOR, "truncation input must be the accumulator format");
    let r = truncate_to_activation(acc.raw);
    Saturating::new(FixedVal::activation(r.value), r.saturated)
}

#[inline]
pub fn weight_to_f64(raw: i8) -> f64 {
    raw as f64 / (1u32 << WEIGHT_FRAC_BITS) as f64
}

#[inline]
pub fn activation_to_f64(raw: i16) -> f64 {
    raw as f64 / (1u32 << ACT_FRAC_BITS) as f64
}

#[inline]
pub fn accumulator_to_f64(raw: i32) -> f64 {
    raw as f64 / (1u32 << ACC_FRAC_BITS) as f64
}
