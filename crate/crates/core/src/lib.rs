//! Multispectral Riemannian classification of motor-imagery EEG.
//!
//! The crate carries two forward paths that share one trained model:
//!
//! * a full-precision path: float IIR filter bank, regularized covariance,
//!   whitening against a per-band reference, matrix logarithm, half
//!   vectorization and a linear SVM;
//! * a mixed-precision path: 8-bit input, 12-bit filter coefficients with
//!   16-bit registers, 16-bit covariance, 11-bit reference, 32-bit whitening
//!   output, a 32-bit float matrix logarithm and an 8-bit SVM with 32-bit
//!   biases.
//!
//! Everything here is pure computation and only needs `alloc`. File formats,
//! the synthetic data generator, thread pools and the CLI live in the `mrc`
//! crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod filterbank;
pub mod fixedpoint;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod riemann;

pub use error::{Error, Result};
pub use fixedpoint::{FixedMatrix, FixedScalar};
pub use linalg::Mat;
pub use model::{ModelParams, SvmParams};
pub use pipeline::{Mode, OpCounters, TrialWindow};
