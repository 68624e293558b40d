//! Learned parameters and the pieces of training that are not plain
//! forward passes: half vectorization, feature requantization, the linear
//! SVM, reference matrices and dynamic-range calibration.

mod features;
mod svm;

pub use features::{requantize_features, vect, vect_len, QuantFeatures};
pub use svm::{
    argmax, quantize_svm, svm_infer_quant, svm_train, LinearSvm, SvmConfig, SvmParams, BIAS_BITS, WEIGHT_BITS,
};

use alloc::vec::Vec;

use crate::filterbank::{BandSpec, QuantizedSosCascade, SosSection};
use crate::fixedpoint::{fits, quantize_value, range_exponent, FixedMatrix};
use crate::linalg::{inv_sqrtm, FlopCount, Mat};
use crate::riemann::REF_BITS;
use crate::{Error, Result};

/// Spare bits kept above the largest training value of every calibrated
/// range.
pub const HEADROOM_BITS: u32 = 1;

/// Everything learned for one frequency band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandModel {
    pub spec: BandSpec,
    pub sections: Vec<SosSection>,
    pub cascade: QuantizedSosCascade,
    /// Right shift from the raw covariance accumulator to 16 bits.
    pub cov_shift: u32,
    /// Right shift from the first whitening product to 16 bits.
    pub whiten_shift: u32,
    /// 11-bit `C_ref^(-1/2)`.
    pub cref: FixedMatrix,
    pub cref_float: Mat<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub bands: Vec<BandModel>,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sampling_rate_hz: f64,
    pub rho: f64,
    pub lambda_min: f64,
    /// Exponent of the 8-bit input samples.
    pub input_exponent: i32,
    /// Global exponent of the 8-bit features.
    pub feature_exponent: i32,
    /// Quantized-path classifier.
    pub svm: SvmParams,
    /// Full-precision-path classifier.
    pub svm_float: LinearSvm,
}

impl ModelParams {
    pub fn n_classes(&self) -> usize {
        self.svm.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.bands.len() * vect_len(self.n_channels)
    }
}

/// `inv_sqrtm` of the mean covariance.
pub fn compute_reference(covs: &[Mat<f64>], lambda_min: f64) -> Result<Mat<f64>> {
    let first = covs.first().ok_or(Error::EmptyTrainingSet)?;
    let n = first.rows();
    let mut mean = Mat::zeros(n, n);
    for c in covs {
        if c.rows() != n || c.cols() != n {
            return Err(Error::Shape("covariance dimensions"));
        }
        for (m, &v) in mean.as_slice_mut().iter_mut().zip(c.as_slice()) {
            *m += v;
        }
    }
    let mean = mean.scale(1.0 / covs.len() as f64);
    inv_sqrtm(&mean, lambda_min, &mut FlopCount::default())
}

/// Smallest exponent at which every entry of `values` fits `bits` signed
/// bits: start from the natural range of the largest magnitude and step up
/// while rounding pushes an entry out of range.
pub fn fitting_exponent(values: &[f64], bits: u32) -> i32 {
    let peak = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut exponent = range_exponent(peak, bits, 0);
    while !values.iter().all(|&x| fits(libm::round(libm::ldexp(x, -exponent)) as i64, bits)) {
        exponent += 1;
    }
    exponent
}

/// 11-bit reference matrix at its [`fitting_exponent`].
pub fn quantize_reference(cref: &Mat<f64>) -> FixedMatrix {
    let exponent = fitting_exponent(cref.as_slice(), REF_BITS);
    let values = cref.as_slice().iter().map(|&x| quantize_value(x, REF_BITS, exponent) as i32).collect();
    FixedMatrix::new(cref.rows(), cref.cols(), values, REF_BITS, exponent)
}

/// Calibrated exponent for `bits`-bit storage of values up to `max_abs`.
pub fn calibrated_exponent(max_abs: f64, bits: u32) -> i32 {
    range_exponent(max_abs, bits, HEADROOM_BITS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_of_identity() {
        let r = compute_reference(&[Mat::identity(4), Mat::identity(4)], 1e-3).unwrap();
        assert!(r.sub(&Mat::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn reference_of_two_diagonals() {
        let r = compute_reference(&[Mat::diag(&[1.0, 1.0]), Mat::diag(&[3.0, 3.0])], 1e-3).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!(r.sub(&Mat::diag(&[h, h])).max_abs() < 1e-15);
    }

    #[test]
    fn reference_whitens_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let covs: Vec<Mat<f64>> = (0..10)
            .map(|_| {
                let x = Mat::from_fn(6, 20, |_, _| rng.gen_range(-1.0..1.0));
                x.matmul(&x.transpose()).symmetrized()
            })
            .collect();
        let r = compute_reference(&covs, 1e-3).unwrap();
        let mut mean = Mat::zeros(6, 6);
        for c in &covs {
            mean.as_slice_mut().iter_mut().zip(c.as_slice()).for_each(|(m, &v)| *m += v / 10.0);
        }
        assert!(r.matmul(&mean).matmul(&r).sub(&Mat::identity(6)).frobenius() < 1e-5);
        assert!(r.is_symmetric());
    }

    #[test]
    fn empty_reference_set() {
        assert_eq!(compute_reference(&[], 1e-3), Err(Error::EmptyTrainingSet));
    }

    #[test]
    fn calibration_rule_examples() {
        assert_eq!(calibrated_exponent(0.99, 8), -6);
        assert_eq!(range_exponent(0.99, 8, 0), -7);
        assert_eq!(calibrated_exponent(3.7, 8), -4);
        assert_eq!(calibrated_exponent(0.0, 8), -6);
    }

    #[test]
    fn reference_exponent_steps_up_once_on_rounding_overflow() {
        // natural range 2^10 at exponent 0, but 1023.7 rounds to 1024
        assert_eq!(range_exponent(1023.7, REF_BITS, 0), 0);
        assert_eq!(fitting_exponent(&[1023.7, -5.0], REF_BITS), 1);
        assert_eq!(fitting_exponent(&[1023.4, -5.0], REF_BITS), 0);
        // -1024 fits, +1024 does not
        assert_eq!(fitting_exponent(&[-1024.0], REF_BITS), 0);
    }

    #[test]
    fn quantized_reference_fits_11_bits_and_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Mat::from_fn(22, 100, |_, _| rng.gen_range(-30.0..30.0));
        let c = x.matmul(&x.transpose()).symmetrized();
        let r = compute_reference(&[c], 1e-3).unwrap();
        let q = quantize_reference(&r);
        assert!(q.is_symmetric());
        assert!(q.values().iter().any(|&v| v.abs() >= 512), "full range used");
        let ev = eigh(&Mat::from_vec(22, 22, q.dequantize()), &mut FlopCount::default()).unwrap();
        assert!(ev.eigenvalues.iter().all(|&l| l > 0.0));
    }
}
