use alloc::vec::Vec;

use super::{FlopCount, Mat, Real, Tridiagonal};
use crate::{Error, Result};

/// Sweep budget per eigenvalue before the iteration is declared stuck.
pub const MAX_SWEEPS: usize = 30;

/// `A = q^T diag(eigenvalues) q`; rows of `q` are eigenvectors. Eigenvalues
/// come out in deflation order, unsorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub q: Mat<T>,
}

impl<T: Real> EigenDecomposition<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        self.q.transpose().matmul(&Mat::diag(&self.eigenvalues)).matmul(&self.q)
    }
}

#[inline]
fn sign_one<T: Real>(x: T) -> T {
    if x.is_sign_negative() { -T::one() } else { T::one() }
}

/// Plane rotation with `c a + s b = r` and `-s a + c b = 0`, built from a
/// ratio and one square root (no trigonometry, no overflow in `a^2 + b^2`).
pub fn givens_coeffs<T: Real>(a: T, b: T) -> (T, T, T) {
    if b == T::zero() {
        (sign_one(a), T::zero(), a.abs())
    } else if a == T::zero() {
        (T::zero(), sign_one(b), b.abs())
    } else if a.abs() > b.abs() {
        let t = b / a;
        let u = sign_one(a) * (T::one() + t * t).sqrt();
        let c = T::one() / u;
        (c, c * t, a * u)
    } else {
        let t = a / b;
        let u = sign_one(b) * (T::one() + t * t).sqrt();
        let s = T::one() / u;
        (s * t, s, b * u)
    }
}

/// Wilkinson shift from the trailing block `[[a, b], [b, c]]`: the
/// eigenvalue closer to `c`. A zero half-gap takes the positive branch.
#[inline]
fn wilkinson_shift<T: Real>(a: T, b: T, c: T) -> T {
    let delta = (a - c) * T::of(0.5);
    let b2 = b * b;
    if b2 == T::zero() {
        return c;
    }
    let root = (delta * delta + b2).sqrt();
    c - b2 / (delta + sign_one(delta) * root)
}

/// Implicit-shift symmetric QR on a tridiagonal matrix. The rotations are
/// accumulated onto `t.qt`, so the returned `q` diagonalizes the matrix the
/// tridiagonal form was derived from.
pub fn qr_wilkinson<T: Real>(t: Tridiagonal<T>, ops: &mut FlopCount) -> Result<EigenDecomposition<T>> {
    let n = t.n();
    let Tridiagonal { diag: mut d, offdiag: mut e, qt: mut q } = t;
    let tol = T::DEFLATE_TOL;
    let negligible = |d: &[T], e: &[T], i: usize| e[i].abs() <= tol * (d[i].abs() + d[i + 1].abs());

    let mut hi = n.saturating_sub(1);
    let mut sweeps = 0;
    while hi > 0 {
        if negligible(&d, &e, hi - 1) {
            e[hi - 1] = T::zero();
            hi -= 1;
            sweeps = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && !negligible(&d, &e, lo - 1) {
            lo -= 1;
        }
        if lo > 0 {
            e[lo - 1] = T::zero();
        }
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::QrNoConvergence { band: None });
        }

        let mu = wilkinson_shift(d[hi - 1], e[hi - 1], d[hi]);
        ops.mul_adds += 4;
        ops.other += 2;

        let mut x = d[lo] - mu;
        let mut z = e[lo];
        for k in lo..hi {
            let (c, s, r) = givens_coeffs(x, z);
            ops.mul_adds += 3;
            ops.other += 2;
            if k > lo {
                e[k - 1] = r;
            }
            let (dk, dk1, ek) = (d[k], d[k + 1], e[k]);
            let cs = c * s;
            let (c2, s2) = (c * c, s * s);
            d[k] = c2 * dk + T::of(2.0) * cs * ek + s2 * dk1;
            d[k + 1] = s2 * dk - T::of(2.0) * cs * ek + c2 * dk1;
            e[k] = cs * (dk1 - dk) + (c2 - s2) * ek;
            ops.mul_adds += 12;
            if k + 1 < hi {
                z = s * e[k + 1];
                e[k + 1] = c * e[k + 1];
                x = e[k];
                ops.mul_adds += 2;
            }
            let cols = q.cols();
            for j in 0..cols {
                let (qk, qk1) = (q[(k, j)], q[(k + 1, j)]);
                q[(k, j)] = c * qk + s * qk1;
                q[(k + 1, j)] = c * qk1 - s * qk;
            }
            ops.mul_adds += 4 * cols as u64;
        }
    }
    Ok(EigenDecomposition { eigenvalues: d, q })
}
