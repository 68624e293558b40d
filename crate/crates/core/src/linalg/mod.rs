//! Symmetric eigensolver and SPD matrix functions.
//!
//! `A = Qt^T T Qt` by Householder tridiagonalization, then the implicit
//! Wilkinson-shift QR iteration diagonalizes `T = Qd^T D Qd` with Givens
//! rotations. `Q = Qd Qt` holds the eigenvectors as rows so that
//! `A = Q^T D Q`.
//!
//! Everything is generic over [`Real`], so the same code runs as the 64-bit
//! reference and as the 32-bit production path.

mod funcs;
mod householder;
mod mat;
mod qr;

pub use funcs::{eigh, inv_sqrtm, matrix_logarithm, spectral_map, DEFAULT_LAMBDA_MIN};
pub use householder::{tridiagonalize_basic, tridiagonalize_improved, Tridiagonal};
pub use mat::Mat;
pub use qr::{givens_coeffs, qr_wilkinson, EigenDecomposition, MAX_SWEEPS};

use core::fmt::Debug;
use num_traits::Float;

/// Floating-point scalar for the eigensolver.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    /// Relative off-diagonal deflation threshold.
    const DEFLATE_TOL: Self;

    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    const DEFLATE_TOL: f32 = 1e-7;

    #[inline]
    fn of(x: f64) -> f32 {
        x as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DEFLATE_TOL: f64 = 1e-12;

    #[inline]
    fn of(x: f64) -> f64 {
        x
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Floating-point operation tally for the eigensolver kernels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCount {
    pub mul_adds: u64,
    /// Divisions, square roots, logarithms and other scalar calls.
    pub other: u64,
}

impl FlopCount {
    /// Multiply-adds count as two flops.
    pub fn flops(&self) -> u64 {
        2 * self.mul_adds + self.other
    }
}

impl core::ops::AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: Self) {
        self.mul_adds += rhs.mul_adds;
        self.other += rhs.other;
    }
}
