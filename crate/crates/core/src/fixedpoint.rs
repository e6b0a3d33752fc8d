// SPDX-License-Identifier: Apache-2.0

//! Signed Q-format fixed-point arithmetic.
//!
//! A [`QFormat`] with `N` total bits and `F` fraction bits represents the
//! values `k / 2^F` for integers `k` in `[-2^(N-1), 2^(N-1) - 1]`.
//! Quantization scales by `2^F`, rounds, saturates, and scales back.
//! Products of two fixed values are accumulated exactly in a wide integer
//! and normalized once with [`requantize`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    pub total_bits: u8,
    pub fraction_bits: u8,
}

impl QFormat {
    pub const MAX_BITS: u8 = 32;

    /// Default weight format.
    pub const WEIGHTS_18: QFormat = QFormat { total_bits: 18, fraction_bits: 14 };
    /// Default activation format.
    pub const ACTIVATIONS_18: QFormat = QFormat { total_bits: 18, fraction_bits: 10 };

    pub fn new(total_bits: u8, fraction_bits: u8) -> Result<Self> {
        if !(2..=Self::MAX_BITS).contains(&total_bits) {
            return Err(Error::Config(format!("total bits must be in 2..=32, got {total_bits}")));
        }
        if fraction_bits >= total_bits {
            return Err(Error::Config(format!(
                "fraction bits ({fraction_bits}) must be below total bits ({total_bits})"
            )));
        }
        Ok(Self { total_bits, fraction_bits })
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn scale(&self) -> f64 {
        (self.fraction_bits as f64).exp2()
    }

    /// Grid spacing `2^-F`.
    pub fn step(&self) -> f64 {
        1.0 / self.scale()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 / self.scale()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 / self.scale()
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    pub fn saturate(&self, raw: i128) -> i32 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i32
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total_bits - self.fraction_bits, self.fraction_bits)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    #[default]
    HalfAwayFromZero,
    HalfEven,
}

impl RoundingMode {
    fn round(self, v: f64) -> f64 {
        match self {
            RoundingMode::HalfAwayFromZero => v.round(),
            RoundingMode::HalfEven => v.round_ties_even(),
        }
    }
}

/// Raw integer for `x` in format `q`.
pub fn quantize_raw(x: f64, q: QFormat, mode: RoundingMode) -> i32 {
    let scaled = mode.round(x * q.scale());
    scaled.clamp(q.min_raw() as f64, q.max_raw() as f64) as i32
}

/// Nearest representable value, rounding half away from zero and saturating.
pub fn quantize_value(x: f64, q: QFormat) -> f64 {
    quantize_value_with(x, q, RoundingMode::default())
}

pub fn quantize_value_with(x: f64, q: QFormat, mode: RoundingMode) -> f64 {
    quantize_raw(x, q, mode) as f64 / q.scale()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTensor {
    pub qformat: QFormat,
    pub raw: Vec<i32>,
    pub shape: Vec<usize>,
}

impl FixedTensor {
    pub fn new(qformat: QFormat, raw: Vec<i32>, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != raw.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {n} values, got {}", raw.len())));
        }
        if let Some(v) = raw.iter().find(|&&v| !qformat.contains_raw(v as i64)) {
            return Err(Error::Config(format!("raw value {v} does not fit {qformat}")));
        }
        Ok(Self { qformat, raw, shape })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

pub fn quantize_tensor<T: Copy + Into<f64>>(values: &[T], shape: &[usize], q: QFormat) -> Result<FixedTensor> {
    quantize_tensor_with(values, shape, q, RoundingMode::default())
}

pub fn quantize_tensor_with<T: Copy + Into<f64>>(
    values: &[T],
    shape: &[usize],
    q: QFormat,
    mode: RoundingMode,
) -> Result<FixedTensor> {
    if values.iter().any(|&v| !v.into().is_finite()) {
        return Err(Error::domain("cannot quantize non-finite values"));
    }
    let raw = values.iter().map(|&v| quantize_raw(v.into(), q, mode)).collect();
    FixedTensor::new(q, raw, shape.to_vec())
}

pub fn dequantize(t: &FixedTensor) -> Vec<f64> {
    let scale = t.qformat.scale();
    t.raw.iter().map(|&r| r as f64 / scale).collect()
}

/// Width in bits of an exact accumulator for `count` products of `a` and `b` operands.
pub fn accumulator_width(a: QFormat, b: QFormat, count: usize) -> u32 {
    let terms = u64::BITS - (count.max(1) as u64 - 1).leading_zeros();
    a.total_bits as u32 + b.total_bits as u32 + terms
}

/// Exact multiply-accumulate unit sized for a fixed number of products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacUnit {
    pub input: QFormat,
    pub weight: QFormat,
    pub count: usize,
    pub width: u32,
}

impl MacUnit {
    /// Bits available in the accumulator register (an `i128`).
    pub const REGISTER_BITS: u32 = 127;

    pub fn new(input: QFormat, weight: QFormat, count: usize) -> Result<Self> {
        let width = accumulator_width(input, weight, count);
        if width > Self::REGISTER_BITS {
            return Err(Error::Config(format!(
                "{count} products of {input} x {weight} need a {width}-bit accumulator"
            )));
        }
        Ok(Self { input, weight, count, width })
    }

    /// Fraction bits of the accumulated sum.
    pub fn fraction_bits(&self) -> u32 {
        self.input.fraction_bits as u32 + self.weight.fraction_bits as u32
    }
}

/// Exact integer dot product of `window` and `kernel`.
pub fn fixed_mul_acc(window: &FixedTensor, kernel: &FixedTensor, unit: &MacUnit) -> Result<i128> {
    if window.shape != kernel.shape {
        return Err(Error::shape(format!("window {:?} vs kernel {:?}", window.shape, kernel.shape)));
    }
    if window.qformat != unit.input || kernel.qformat != unit.weight {
        return Err(Error::FormatMismatch("operand formats differ from the MAC unit".into()));
    }
    if window.len() > unit.count {
        return Err(Error::Config(format!("{} products exceed the unit's {}", window.len(), unit.count)));
    }
    Ok(window.raw.iter().zip(&kernel.raw).map(|(&a, &b)| a as i128 * b as i128).sum())
}

/// Arithmetic right shift by `shift` bits with the given rounding.
#[inline]
pub fn round_shift(acc: i128, shift: u32, mode: RoundingMode) -> i128 {
    if shift == 0 {
        return acc;
    }
    let half = 1i128 << (shift - 1);
    let mag = acc.unsigned_abs() as i128;
    let mut q = mag >> shift;
    let rem = mag & ((1i128 << shift) - 1);
    let round_up = match mode {
        RoundingMode::HalfAwayFromZero => rem >= half,
        RoundingMode::HalfEven => rem > half || (rem == half && q & 1 == 1),
    };
    if round_up {
        q += 1;
    }
    if acc < 0 {
        -q
    } else {
        q
    }
}

/// Drops `shift` fraction bits from an accumulator and saturates into `q`.
pub fn requantize(acc: i128, shift: u32, q: QFormat) -> i32 {
    requantize_with(acc, shift, q, RoundingMode::default())
}

pub fn requantize_with(acc: i128, shift: u32, q: QFormat, mode: RoundingMode) -> i32 {
    q.saturate(round_shift(acc, shift, mode))
}
