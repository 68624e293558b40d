//! Power-of-two scaled integers.
//!
//! A fixed-point value is an integer `value` with a storage width `bits` and
//! a shared exponent such that the represented real is `value * 2^exponent`.
//! Narrowing always saturates; quantization rounds to nearest with ties away
//! from zero; right shifts round half up.

use alloc::vec::Vec;

/// Signed range `[-2^(bits-1), 2^(bits-1) - 1]`.
#[inline]
pub const fn signed_range(bits: u32) -> (i64, i64) {
    let half = 1i64 << (bits - 1);
    (-half, half - 1)
}

#[inline]
pub fn saturate(value: i64, bits: u32) -> i64 {
    let (lo, hi) = signed_range(bits);
    value.clamp(lo, hi)
}

#[inline]
pub fn fits(value: i64, bits: u32) -> bool {
    let (lo, hi) = signed_range(bits);
    (lo..=hi).contains(&value)
}

/// `(value + 2^(shift-1)) >> shift` with an arithmetic shift.
#[inline]
pub fn shift_round(value: i64, shift: u32) -> i64 {
    match shift {
        0 => value,
        s if s < 63 => value.saturating_add(1i64 << (s - 1)) >> s,
        63 => ((value as i128 + (1i128 << 62)) >> 63) as i64,
        _ => 0,
    }
}

/// Right shift for `shift > 0`, exact left shift for `shift < 0`.
#[inline]
pub fn shift_round_signed(value: i64, shift: i32) -> i64 {
    if shift >= 0 {
        shift_round(value, shift as u32)
    } else {
        value << (-shift) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedScalar {
    pub value: i64,
    pub bits: u32,
    pub exponent: i32,
}

impl FixedScalar {
    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Nearest integer multiple of `2^exponent`, saturated to `bits`.
pub fn quantize(x: f64, bits: u32, exponent: i32) -> FixedScalar {
    FixedScalar { value: quantize_value(x, bits, exponent), bits, exponent }
}

#[inline]
pub fn quantize_value(x: f64, bits: u32, exponent: i32) -> i64 {
    debug_assert!((1..=32).contains(&bits));
    let (lo, hi) = signed_range(bits);
    let scaled = libm::round(libm::ldexp(x, -exponent));
    if scaled.is_nan() {
        0
    } else if scaled <= lo as f64 {
        lo
    } else if scaled >= hi as f64 {
        hi
    } else {
        scaled as i64
    }
}

pub fn dequantize(s: FixedScalar) -> f64 {
    libm::ldexp(s.value as f64, s.exponent)
}

/// Divides by `2^shift` (round half up) and narrows to `new_bits`.
pub fn rescale_shift(s: FixedScalar, new_bits: u32, shift: u32) -> FixedScalar {
    FixedScalar {
        value: saturate(shift_round(s.value, shift), new_bits),
        bits: new_bits,
        exponent: s.exponent + shift as i32,
    }
}

/// Exponent of the power-of-two range `2^(ceil(log2 max_abs) + headroom)`
/// spread over `bits` signed bits.
///
/// `max_abs == 0` (or non-finite) yields the range `[-1, 1)`.
pub fn range_exponent(max_abs: f64, bits: u32, headroom: u32) -> i32 {
    let top = if max_abs > 0.0 && max_abs.is_finite() {
        ceil_log2(max_abs)
    } else {
        0
    };
    top + headroom as i32 - (bits as i32 - 1)
}

/// Exact `ceil(log2 x)` for positive finite `x`.
fn ceil_log2(x: f64) -> i32 {
    let (m, e) = libm::frexp(x);
    // x = m * 2^e with m in [0.5, 1)
    if m == 0.5 { e - 1 } else { e }
}

/// Smallest right shift that brings `max_abs` into `bits` signed bits with
/// `headroom` spare bits, after round-half-up.
pub fn shift_for_range(max_abs: u64, bits: u32, headroom: u32) -> u32 {
    let limit = (signed_range(bits).1 >> headroom) as u64;
    let mut shift = 0;
    while shift < 63 {
        let shifted = if shift == 0 {
            max_abs as u128
        } else {
            (max_abs as u128 + (1u128 << (shift - 1))) >> shift
        };
        if shifted <= limit as u128 {
            break;
        }
        shift += 1;
    }
    shift
}

/// Row-major integer matrix with one storage width and one exponent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FixedMatrix {
    rows: usize,
    cols: usize,
    values: Vec<i32>,
    pub bits: u32,
    pub exponent: i32,
}

impl FixedMatrix {
    /// Panics if an entry does not fit `bits` or the length is wrong.
    pub fn new(rows: usize, cols: usize, values: Vec<i32>, bits: u32, exponent: i32) -> Self {
        assert!(rows > 0 && cols > 0, "empty fixed-point matrix");
        assert_eq!(values.len(), rows * cols, "fixed-point matrix length");
        assert!(
            values.iter().all(|&v| fits(v as i64, bits)),
            "fixed-point value exceeds {bits} bits"
        );
        FixedMatrix { rows, cols, values, bits, exponent }
    }

    pub fn zeros(rows: usize, cols: usize, bits: u32, exponent: i32) -> Self {
        Self::new(rows, cols, alloc::vec![0; rows * cols], bits, exponent)
    }

    /// Saturating construction from wide values.
    pub fn from_wide(rows: usize, cols: usize, wide: &[i64], bits: u32, exponent: i32) -> Self {
        let values = wide.iter().map(|&v| saturate(v, bits) as i32).collect();
        Self::new(rows, cols, values, bits, exponent)
    }

    pub fn quantize(rows: usize, cols: usize, real: &[f64], bits: u32, exponent: i32) -> Self {
        let values = real.iter().map(|&x| quantize_value(x, bits, exponent) as i32).collect();
        Self::new(rows, cols, values, bits, exponent)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.values[i * self.cols + j]
    }

    pub fn scalar(&self, i: usize, j: usize) -> FixedScalar {
        FixedScalar { value: self.get(i, j) as i64, bits: self.bits, exponent: self.exponent }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.values.iter().map(|&v| libm::ldexp(v as f64, self.exponent)).collect()
    }

    pub fn dequantize_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| libm::ldexpf(v as f32, self.exponent)).collect()
    }
}
