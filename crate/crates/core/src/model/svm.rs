use alloc::vec::Vec;

use crate::fixedpoint::{quantize_value, range_exponent, saturate};
use crate::{Error, Result};

pub const WEIGHT_BITS: u32 = 8;
pub const BIAS_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Hinge-loss weight; the regularizer is `lambda = 1 / (c m)` for `m`
    /// training rows.
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, epochs: 500 }
    }
}

/// Float one-vs-rest linear classifier, weights row-major per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub n_classes: usize,
    pub n_features: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LinearSvm {
    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.n_features..(class + 1) * self.n_features]
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_features, "feature length");
        (0..self.n_classes).map(|c| dot(self.row(c), x) + self.biases[c]).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

/// Quantized classifier: 8-bit weights at `weight_exponent`, 32-bit biases
/// at `weight_exponent + feature_exponent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SvmParams {
    pub n_classes: usize,
    pub n_features: usize,
    pub weights: Vec<i8>,
    pub weight_exponent: i32,
    pub biases: Vec<i32>,
}

impl SvmParams {
    pub fn row(&self, class: usize) -> &[i8] {
        &self.weights[class * self.n_features..(class + 1) * self.n_features]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// One-vs-rest hinge-loss SVM by full-batch Pegasos: step `1 / (lambda t)`,
/// projection onto the ball of radius `1 / sqrt(lambda)`, bias handled as a
/// constant augmented feature. No randomness is involved, so repeated runs
/// are bit-identical.
///
/// `features` holds `labels.len()` rows of `n_features` values.
pub fn svm_train(features: &[f64], n_features: usize, labels: &[u8], n_classes: usize, cfg: &SvmConfig) -> Result<LinearSvm> {
    let m = labels.len();
    if m == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if features.len() != m * n_features {
        return Err(Error::Shape("feature matrix rows"));
    }
    let mut counts = alloc::vec![0usize; n_classes];
    for &l in labels {
        let slot = counts.get_mut(l as usize).ok_or(Error::Label { label: l, n_classes })?;
        *slot += 1;
    }
    if n_classes < 2 || counts.contains(&0) {
        return Err(Error::DegenerateTrainingSet);
    }

    let lambda = 1.0 / (cfg.c * m as f64);
    let radius = 1.0 / libm::sqrt(lambda);
    let rows: Vec<&[f64]> = (0..m).map(|i| &features[i * n_features..(i + 1) * n_features]).collect();
    let mut weights = Vec::with_capacity(n_classes * n_features);
    let mut biases = Vec::with_capacity(n_classes);
    let mut grad = alloc::vec![0.0; n_features];
    for class in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l as usize == class { 1.0 } else { -1.0 }).collect();
        let mut w = alloc::vec![0.0; n_features];
        let mut b = 0.0;
        for t in 1..=cfg.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (x, &yi) in rows.iter().zip(&y) {
                if yi * (dot(&w, x) + b) < 1.0 {
                    grad.iter_mut().zip(x.iter()).for_each(|(g, &xj)| *g += yi * xj);
                    grad_b += yi;
                }
            }
            let eta = 1.0 / (lambda * t as f64);
            let decay = 1.0 - eta * lambda;
            let step = eta / m as f64;
            w.iter_mut().zip(&grad).for_each(|(wj, &g)| *wj = decay * *wj + step * g);
            b = decay * b + step * grad_b;
            let norm = libm::sqrt(dot(&w, &w) + b * b);
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|wj| *wj *= s);
                b *= s;
            }
        }
        weights.extend_from_slice(&w);
        biases.push(b);
    }
    Ok(LinearSvm { n_classes, n_features, weights, biases })
}

/// Weights over the full 8-bit range of `max |w|`, biases at the score scale
/// so that integer scores need no rescaling.
pub fn quantize_svm(svm: &LinearSvm, feature_exponent: i32) -> SvmParams {
    let peak = svm.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let weight_exponent = range_exponent(peak, WEIGHT_BITS, 0);
    let weights = svm.weights.iter().map(|&w| quantize_value(w, WEIGHT_BITS, weight_exponent) as i8).collect();
    let score_exponent = weight_exponent + feature_exponent;
    let biases = svm.biases.iter().map(|&b| quantize_value(b, BIAS_BITS, score_exponent) as i32).collect();
    SvmParams { n_classes: svm.n_classes, n_features: svm.n_features, weights, weight_exponent, biases }
}

/// Integer scores `sum_j w_ij x_j + b_i` (64-bit accumulation, 32-bit
/// saturation) and their argmax.
pub fn svm_infer_quant(x: &[i8], svm: &SvmParams) -> (Vec<i32>, usize) {
    assert_eq!(x.len(), svm.n_features, "feature length");
    let scores: Vec<i32> = (0..svm.n_classes)
        .map(|c| {
            let acc: i64 = svm.row(c).iter().zip(x).map(|(&w, &v)| w as i64 * v as i64).sum();
            saturate(acc + svm.biases[c] as i64, BIAS_BITS) as i32
        })
        .collect();
    let class = argmax(&scores);
    (scores, class)
}
