//! Regularized covariance and whitening against a reference matrix.
//!
//! Quantized widths: 8-bit filtered samples in, 16-bit covariance, 11-bit
//! reference (stored in 16-bit containers), 16-bit intermediate product and a
//! 32-bit whitened matrix. Products accumulate in 64 bits; every stage
//! boundary narrows with saturation.

use alloc::vec::Vec;

use crate::fixedpoint::{quantize_value, saturate, shift_round, FixedMatrix};
use crate::linalg::{Mat, Real};

pub const COV_BITS: u32 = 16;
pub const REF_BITS: u32 = 11;
pub const PRODUCT_BITS: u32 = 16;
pub const WHITENED_BITS: u32 = 32;

/// `X X^T + rho I`; upper triangle computed, then mirrored.
pub fn covariance_float<T: Real>(x: &Mat<T>, rho: T) -> Mat<T> {
    let n = x.rows();
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        let xi = x.row(i);
        for j in i..n {
            let acc = xi.iter().zip(x.row(j)).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let v = if i == j { acc + rho } else { acc };
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Raw upper-triangle accumulation `sum_k x_ik x_jk` in 64 bits, row-major
/// over `j >= i`.
pub fn covariance_accumulate(x: &FixedMatrix) -> Vec<i64> {
    let (n, s) = (x.rows(), x.cols());
    let vals = x.values();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let xi = &vals[i * s..(i + 1) * s];
        for j in i..n {
            let xj = &vals[j * s..(j + 1) * s];
            out.push(xi.iter().zip(xj).map(|(&a, &b)| a as i64 * b as i64).sum());
        }
    }
    out
}

/// `rho` at the covariance output scale.
pub fn quantized_rho(rho: f64, output_exponent: i32) -> i64 {
    quantize_value(rho, 32, output_exponent)
}

/// `sat16(round((X X^T + rho I) / 2^out_shift))` at exponent
/// `2 e_x + out_shift`; exactly symmetric.
pub fn covariance_quant(x: &FixedMatrix, rho: f64, out_shift: u32) -> FixedMatrix {
    let upper = covariance_accumulate(x);
    covariance_from_accumulated(x.rows(), &upper, 2 * x.exponent, rho, out_shift)
}

/// Narrowing half of [`covariance_quant`], for callers that reuse the raw
/// accumulation during calibration.
pub fn covariance_from_accumulated(n: usize, upper: &[i64], acc_exponent: i32, rho: f64, out_shift: u32) -> FixedMatrix {
    let exponent = acc_exponent + out_shift as i32;
    let rho_q = quantized_rho(rho, exponent);
    let mut wide = alloc::vec![0i64; n * n];
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let mut acc = upper[idx];
            if i == j {
                acc += rho_q << out_shift;
            }
            let v = shift_round(acc, out_shift);
            wide[i * n + j] = v;
            wide[j * n + i] = v;
            idx += 1;
        }
    }
    FixedMatrix::from_wide(n, n, &wide, COV_BITS, exponent)
}

/// Unnarrowed first whitening product `Cref C` (full matrix).
pub fn whitening_product(c: &FixedMatrix, cref: &FixedMatrix) -> Vec<i64> {
    let n = c.rows();
    assert_eq!((c.rows(), c.cols(), cref.rows(), cref.cols()), (n, n, n, n), "whitening shapes");
    let (cv, rv) = (c.values(), cref.values());
    let mut p = alloc::vec![0i64; n * n];
    for i in 0..n {
        for k in 0..n {
            let r = rv[i * n + k] as i64;
            let row = &cv[k * n..(k + 1) * n];
            for (dst, &cij) in p[i * n..(i + 1) * n].iter_mut().zip(row) {
                *dst += r * cij as i64;
            }
        }
    }
    p
}

/// `W = Cref C Cref`. The first product is narrowed to 16 bits with
/// `product_shift`; the second keeps the full 32-bit result. The upper
/// triangle of the second product is mirrored so `W` is exactly symmetric.
pub fn whiten_quant(c: &FixedMatrix, cref: &FixedMatrix, product_shift: u32) -> FixedMatrix {
    let n = c.rows();
    let p: Vec<i64> = whitening_product(c, cref)
        .into_iter()
        .map(|v| saturate(shift_round(v, product_shift), PRODUCT_BITS))
        .collect();
    let rv = cref.values();
    let mut w = alloc::vec![0i64; n * n];
    for i in 0..n {
        let pi = &p[i * n..(i + 1) * n];
        for j in i..n {
            let acc: i64 = pi.iter().enumerate().map(|(k, &pik)| pik * rv[k * n + j] as i64).sum();
            let v = saturate(acc, WHITENED_BITS);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    let exponent = 2 * cref.exponent + c.exponent + product_shift as i32;
    FixedMatrix::from_wide(n, n, &w, WHITENED_BITS, exponent)
}

/// `Cref C Cref`, symmetrized as `(W + W^T) / 2`.
pub fn whiten_float<T: Real>(c: &Mat<T>, cref: &Mat<T>) -> Mat<T> {
    cref.matmul(c).matmul(cref).symmetrized()
}

/// Multiply-accumulates of the quantized whitening for an `n x n` input.
pub fn whitening_macs(n: usize) -> u64 {
    (n * n * n + n * n * (n + 1) / 2) as u64
}
