use super::{qr_wilkinson, tridiagonalize_improved, EigenDecomposition, FlopCount, Mat, Real};
use crate::Result;

/// Eigenvalue floor applied before taking logarithms or inverse roots.
pub const DEFAULT_LAMBDA_MIN: f64 = 1e-3;

/// Symmetric eigendecomposition, improved Householder followed by QR.
pub fn eigh<T: Real>(a: &Mat<T>, ops: &mut FlopCount) -> Result<EigenDecomposition<T>> {
    let t = tridiagonalize_improved(a, ops);
    qr_wilkinson(t, ops)
}

/// `Q^T diag(f(lambda)) Q`, computed on the upper triangle and mirrored.
pub fn spectral_map<T: Real>(ed: &EigenDecomposition<T>, f: impl Fn(T) -> T, ops: &mut FlopCount) -> Mat<T> {
    let n = ed.eigenvalues.len();
    let fl: alloc::vec::Vec<T> = ed.eigenvalues.iter().map(|&l| f(l)).collect();
    ops.other += n as u64;
    let q = &ed.q;
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for k in 0..n {
                acc = acc + q[(k, i)] * fl[k] * q[(k, j)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    ops.mul_adds += (n * (n + 1) / 2 * 2 * n) as u64;
    out
}

/// `logm(W)` with every eigenvalue clipped to `max(lambda, lambda_min)`.
/// `W` does not have to be positive definite.
pub fn matrix_logarithm<T: Real>(w: &Mat<T>, lambda_min: T, ops: &mut FlopCount) -> Result<Mat<T>> {
    let ed = eigh(w, ops)?;
    Ok(spectral_map(&ed, |l| l.max(lambda_min).ln(), ops))
}

/// `C^(-1/2)` with the same eigenvalue floor as [`matrix_logarithm`].
pub fn inv_sqrtm<T: Real>(c: &Mat<T>, lambda_min: T, ops: &mut FlopCount) -> Result<Mat<T>> {
    let ed = eigh(c, ops)?;
    Ok(spectral_map(&ed, |l| T::one() / l.max(lambda_min).sqrt(), ops))
}
