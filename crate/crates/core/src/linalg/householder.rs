use alloc::vec::Vec;

use super::{FlopCount, Mat, Real};

/// `A = qt^T T qt` with `T` symmetric tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub diag: Vec<T>,
    pub offdiag: Vec<T>,
    pub qt: Mat<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Mat<T> {
        let n = self.n();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.offdiag[i]
            } else if j + 1 == i {
                self.offdiag[j]
            } else {
                T::zero()
            }
        })
    }

    /// `qt^T T qt`.
    pub fn reconstruct(&self) -> Mat<T> {
        self.qt.transpose().matmul(&self.to_dense()).matmul(&self.qt)
    }
}

/// Reflector `H = I - beta v v^T` mapping `x` to `alpha e1`, or `None` when
/// `x[1..]` is already zero.
fn reflector<T: Real>(x: &[T], ops: &mut FlopCount) -> Option<(Vec<T>, T, T)> {
    let sigma = x[1..].iter().fold(T::zero(), |acc, &xi| acc + xi * xi);
    ops.mul_adds += x.len() as u64;
    if sigma == T::zero() {
        return None;
    }
    let x0 = x[0];
    let norm = (x0 * x0 + sigma).sqrt();
    let alpha = if x0 >= T::zero() { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] = x0 - alpha;
    let beta = T::of(2.0) / (v[0] * v[0] + sigma);
    ops.other += 3;
    Some((v, beta, alpha))
}

fn split<T: Real>(a: &Mat<T>, qt: Mat<T>) -> Tridiagonal<T> {
    let n = a.rows();
    Tridiagonal {
        diag: (0..n).map(|i| a[(i, i)]).collect(),
        offdiag: (0..n.saturating_sub(1)).map(|i| a[(i + 1, i)]).collect(),
        qt,
    }
}

/// Textbook reduction: form every reflector as a dense `n x n` matrix and
/// apply it by full matrix products, `A <- H A H`, `Qt <- H Qt`.
pub fn tridiagonalize_basic<T: Real>(a: &Mat<T>, ops: &mut FlopCount) -> Tridiagonal<T> {
    assert!(a.is_square(), "tridiagonalize: square input");
    let n = a.rows();
    let dense = (n * n * n) as u64;
    let mut work = a.clone();
    let mut qt = Mat::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<T> = (k + 1..n).map(|i| work[(i, k)]).collect();
        let Some((v, beta, _)) = reflector(&x, ops) else { continue };
        let mut h = Mat::identity(n);
        for (i, &vi) in v.iter().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                h[(k + 1 + i, k + 1 + j)] = h[(k + 1 + i, k + 1 + j)] - beta * vi * vj;
            }
        }
        ops.mul_adds += (n * n) as u64;
        work = h.matmul(&work).matmul(&h);
        qt = h.matmul(&qt);
        ops.mul_adds += 3 * dense;
    }
    split(&work, qt)
}

/// Rank-2 update formulation. Each step only touches the trailing block and
/// the rows of `Qt` the reflector acts on:
///
/// `p = beta B v`, `w = p - (beta p.v / 2) v`, `B <- B - v w^T - w v^T`.
pub fn tridiagonalize_improved<T: Real>(a: &Mat<T>, ops: &mut FlopCount) -> Tridiagonal<T> {
    assert!(a.is_square(), "tridiagonalize: square input");
    let n = a.rows();
    let mut work = a.clone();
    let mut qt = Mat::identity(n);
    let mut p = alloc::vec![T::zero(); n];
    let mut w = alloc::vec![T::zero(); n];
    for k in 0..n.saturating_sub(2) {
        let off = k + 1;
        let m = n - off;
        let x: Vec<T> = (off..n).map(|i| work[(i, k)]).collect();
        let Some((v, beta, alpha)) = reflector(&x, ops) else { continue };

        let mut pv = T::zero();
        for i in 0..m {
            let row = &work.row(off + i)[off..];
            let dot = row.iter().zip(&v).fold(T::zero(), |acc, (&b, &vj)| acc + b * vj);
            p[i] = beta * dot;
            pv = pv + p[i] * v[i];
        }
        let kk = beta * pv * T::of(0.5);
        for i in 0..m {
            w[i] = p[i] - kk * v[i];
        }
        ops.mul_adds += (m * m + 3 * m) as u64;

        for i in 0..m {
            for j in i..m {
                let upd = work[(off + i, off + j)] - v[i] * w[j] - w[i] * v[j];
                work[(off + i, off + j)] = upd;
                work[(off + j, off + i)] = upd;
            }
        }
        ops.mul_adds += (m * (m + 1)) as u64;

        work[(off, k)] = alpha;
        work[(k, off)] = alpha;
        for i in 1..m {
            work[(off + i, k)] = T::zero();
            work[(k, off + i)] = T::zero();
        }

        // column 0 of Qt below row 0 is always zero
        for j in 1..n {
            let mut s = T::zero();
            for i in 0..m {
                s = s + v[i] * qt[(off + i, j)];
            }
            let s = beta * s;
            for i in 0..m {
                qt[(off + i, j)] = qt[(off + i, j)] - s * v[i];
            }
        }
        ops.mul_adds += (2 * m * (n - 1)) as u64;
    }
    split(&work, qt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    fn orthogonality_error(q: &Mat<f64>) -> f64 {
        q.matmul(&q.transpose()).sub(&Mat::identity(q.rows())).frobenius()
    }

    #[test]
    fn tridiagonal_input_is_untouched() {
        let a = Mat::from_vec(3, 3, alloc::vec![2.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 4.0]);
        for t in [
            tridiagonalize_basic(&a, &mut FlopCount::default()),
            tridiagonalize_improved(&a, &mut FlopCount::default()),
        ] {
            assert_eq!(t.to_dense(), a);
            assert_eq!(t.qt, Mat::identity(3));
        }
    }

    #[test]
    fn identity_is_fixed() {
        for n in [1, 2, 5] {
            let a = Mat::<f64>::identity(n);
            let t = tridiagonalize_improved(&a, &mut FlopCount::default());
            assert_eq!(t.to_dense(), a);
            assert_eq!(t.qt, a);
            let t = tridiagonalize_basic(&a, &mut FlopCount::default());
            assert_eq!(t.to_dense(), a);
        }
    }

    #[test]
    fn random_6x6_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_symmetric(6, &mut rng);
        for t in [
            tridiagonalize_basic(&a, &mut FlopCount::default()),
            tridiagonalize_improved(&a, &mut FlopCount::default()),
        ] {
            assert!(t.reconstruct().sub(&a).frobenius() < 1e-6);
            assert!(orthogonality_error(&t.qt) < 1e-10);
            let tr: f64 = t.diag.iter().sum();
            assert!((tr - a.trace()).abs() <= 1e-5 * a.trace().abs().max(1e-300));
        }
    }

    #[test]
    fn improved_matches_basic_and_is_cheaper() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let a = random_symmetric(22, &mut rng);
            let (mut cb, mut ci) = (FlopCount::default(), FlopCount::default());
            let b = tridiagonalize_basic(&a, &mut cb);
            let i = tridiagonalize_improved(&a, &mut ci);
            for (x, y) in b.diag.iter().zip(&i.diag).chain(b.offdiag.iter().zip(&i.offdiag)) {
                assert!((x - y).abs() < 1e-10);
            }
            for (x, y) in b.qt.as_slice().iter().zip(i.qt.as_slice()) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!(ci.mul_adds < cb.mul_adds);
        }
    }
}
