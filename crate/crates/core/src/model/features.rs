use alloc::vec::Vec;

use crate::filterbank::SAMPLE_BITS;
use crate::fixedpoint::{quantize_value, signed_range};
use crate::linalg::{Mat, Real};

/// Half-vectorization length `n (n + 1) / 2`.
pub const fn vect_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Diagonal first, then the strict upper triangle row by row scaled with
/// `sqrt(2)`, so that `|vect(L)|_2 = |L|_F` for symmetric `L`.
pub fn vect<T: Real>(l: &Mat<T>) -> Vec<T> {
    let n = l.rows();
    debug_assert!(l.is_square());
    let sqrt2 = T::of(core::f64::consts::SQRT_2);
    let mut out = Vec::with_capacity(vect_len(n));
    out.extend((0..n).map(|i| l[(i, i)]));
    for i in 0..n {
        out.extend((i + 1..n).map(|j| l[(i, j)] * sqrt2));
    }
    out
}

/// 8-bit feature vector with one shared exponent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantFeatures {
    pub values: Vec<i8>,
    pub exponent: i32,
}

impl QuantFeatures {
    pub fn dequantize(&self) -> Vec<f64> {
        self.values.iter().map(|&v| libm::ldexp(v as f64, self.exponent)).collect()
    }

    /// Entries pinned at either end of the 8-bit range.
    pub fn saturated(&self) -> usize {
        let (lo, hi) = signed_range(SAMPLE_BITS);
        self.values.iter().filter(|&&v| v as i64 == lo || v as i64 == hi).count()
    }
}

pub fn requantize_features(v: &[f64], feature_exponent: i32) -> QuantFeatures {
    QuantFeatures {
        values: v.iter().map(|&x| quantize_value(x, SAMPLE_BITS, feature_exponent) as i8).collect(),
        exponent: feature_exponent,
    }
}
