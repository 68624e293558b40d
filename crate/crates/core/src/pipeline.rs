//! End-to-end forward passes, training and operation counting.
//!
//! Per band, the full-precision path runs
//! `filter -> covariance -> whitening -> logm -> vect` in `f64`. The
//! mixed-precision path runs the filter, covariance and whitening on
//! integers, converts the 32-bit whitened matrix to `f32` for the matrix
//! logarithm and requantizes the vectorized result to 8 bits.
//!
//! Bands are independent. Every function that fans out takes an
//! [`Executor`]; results are always gathered in band (or trial) order, so the
//! output does not depend on how the work was scheduled.

use alloc::vec::Vec;
use core::ops::AddAssign;

use crate::filterbank::{
    default_bands, design_bandpass, filter_apply_float, filter_apply_quant, quantize_cascade, BandSpec,
    QuantizedSosCascade, SosSection, COEFF_BITS, MACS_PER_SECTION, SAMPLE_BITS,
};
use crate::fixedpoint::{quantize_value, shift_for_range, FixedMatrix};
use crate::linalg::{matrix_logarithm, FlopCount, Mat, DEFAULT_LAMBDA_MIN};
use crate::model::{
    calibrated_exponent, compute_reference, quantize_reference, quantize_svm, requantize_features, svm_infer_quant,
    svm_train, vect, vect_len, BandModel, ModelParams, QuantFeatures, SvmConfig, HEADROOM_BITS,
};
use crate::riemann::{
    covariance_accumulate, covariance_float, covariance_from_accumulated, whiten_float, whiten_quant, whitening_macs,
    whitening_product, COV_BITS, PRODUCT_BITS,
};
use crate::{Error, Result};

/// Runs `f(0), f(1), ..., f(n - 1)` and returns the results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Single-threaded executor, the reference schedule.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Float,
    Quant,
}

/// One EEG window, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialWindow {
    n_channels: usize,
    n_samples: usize,
    samples: Vec<f32>,
    pub label: Option<u8>,
    pub sampling_rate_hz: f64,
}

impl TrialWindow {
    pub fn new(n_channels: usize, n_samples: usize, samples: Vec<f32>, label: Option<u8>, sampling_rate_hz: f64) -> Result<Self> {
        if n_channels == 0 || n_samples == 0 || samples.len() != n_channels * n_samples {
            return Err(Error::Shape("trial samples"));
        }
        Ok(TrialWindow { n_channels, n_samples, samples, label, sampling_rate_hz })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    /// Samples `start..start + len` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<TrialWindow> {
        if len == 0 || start + len > self.n_samples {
            return Err(Error::Shape("window exceeds trial"));
        }
        let samples = (0..self.n_channels).flat_map(|c| self.channel(c)[start..start + len].iter().copied()).collect();
        TrialWindow::new(self.n_channels, len, samples, self.label, self.sampling_rate_hz)
    }

    /// 8-bit samples at `exponent`, one row per channel.
    pub fn quantize(&self, exponent: i32) -> FixedMatrix {
        let values = self.samples.iter().map(|&x| quantize_value(x as f64, SAMPLE_BITS, exponent) as i32).collect();
        FixedMatrix::new(self.n_channels, self.n_samples, values, SAMPLE_BITS, exponent)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max((x as f64).abs()))
    }
}

/// Cuts the analysis window out of a recorded trial. A trial that already
/// has the window length is used as is; a longer one is cropped starting
/// `offset_s` seconds in.
pub fn select_window(trial: &TrialWindow, offset_s: f64, window_s: f64) -> Result<TrialWindow> {
    let fs = trial.sampling_rate_hz;
    let len = libm::round(window_s * fs) as usize;
    if trial.n_samples == len {
        return Ok(trial.clone());
    }
    let start = libm::round(offset_s * fs);
    if start < 0.0 {
        return Err(Error::Shape("negative window offset"));
    }
    trial.window(start as usize, len)
}

/// Operation tallies of one pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StageCounts {
    pub fixed_macs: u64,
    pub flops: u64,
    pub shifts: u64,
}

impl AddAssign for StageCounts {
    fn add_assign(&mut self, rhs: StageCounts) {
        self.fixed_macs += rhs.fixed_macs;
        self.flops += rhs.flops;
        self.shifts += rhs.shifts;
    }
}

/// Per-stage operation counts of a forward pass. Input quantization (one
/// rounding per sample, shared by all bands) is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OpCounters {
    pub filter: StageCounts,
    pub covariance: StageCounts,
    pub whitening: StageCounts,
    /// Matrix logarithm including the dequantize and requantize boundaries.
    pub logm: StageCounts,
    pub classifier: StageCounts,
}

impl OpCounters {
    pub fn stages(&self) -> [(&'static str, StageCounts); 5] {
        [
            ("filter", self.filter),
            ("covariance", self.covariance),
            ("whitening", self.whitening),
            ("logm", self.logm),
            ("classifier", self.classifier),
        ]
    }

    pub fn total(&self) -> StageCounts {
        let mut t = StageCounts::default();
        for (_, s) in self.stages() {
            t += s;
        }
        t
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: OpCounters) {
        self.filter += rhs.filter;
        self.covariance += rhs.covariance;
        self.whitening += rhs.whitening;
        self.logm += rhs.logm;
        self.classifier += rhs.classifier;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Float(Vec<f64>),
    /// Unrescaled 32-bit scores.
    Quant(Vec<i32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Scores,
}

fn check_trial(trial: &TrialWindow, model: &ModelParams) -> Result<()> {
    if trial.n_channels != model.n_channels || trial.n_samples != model.n_samples {
        return Err(Error::Shape("trial dimensions differ from the model"));
    }
    if trial.sampling_rate_hz != model.sampling_rate_hz {
        return Err(Error::Shape("trial sampling rate differs from the model"));
    }
    Ok(())
}

fn filtered_float(trial: &TrialWindow, sections: &[SosSection]) -> Mat<f64> {
    let (n, s) = (trial.n_channels, trial.n_samples);
    let mut data = Vec::with_capacity(n * s);
    for c in 0..n {
        let x: Vec<f64> = trial.channel(c).iter().map(|&v| v as f64).collect();
        data.extend(filter_apply_float(&x, sections));
    }
    Mat::from_vec(n, s, data)
}

fn filtered_quant(xq: &FixedMatrix, cascade: &QuantizedSosCascade) -> FixedMatrix {
    let (n, s) = (xq.rows(), xq.cols());
    let mut data = Vec::with_capacity(n * s);
    for row in xq.values().chunks_exact(s) {
        data.extend(filter_apply_quant(row, cascade));
    }
    FixedMatrix::new(n, s, data, SAMPLE_BITS, cascade.output_exponent())
}

fn log_features_f64(w: &Mat<f64>, lambda_min: f64, ops: &mut FlopCount) -> Result<Vec<f64>> {
    Ok(vect(&matrix_logarithm(w, lambda_min, ops)?))
}

/// Dequantize the whitened matrix to `f32`, take the logarithm, vectorize.
fn log_features_f32(w: &FixedMatrix, lambda_min: f64, ops: &mut FlopCount) -> Result<Vec<f64>> {
    let n = w.rows();
    let wf = Mat::from_vec(n, n, w.dequantize_f32());
    let l = matrix_logarithm(&wf, lambda_min as f32, ops)?;
    Ok(vect(&l).into_iter().map(|x| x as f64).collect())
}

/// Closed-form counts of one band, plus the eigensolver's own tally.
fn band_counts(model: &ModelParams, b: usize, mode: Mode, logm: &FlopCount) -> OpCounters {
    let band = &model.bands[b];
    let (n, s) = (model.n_channels as u64, model.n_samples as u64);
    let tri = vect_len(model.n_channels) as u64;
    match mode {
        Mode::Float => OpCounters {
            filter: StageCounts { flops: 2 * MACS_PER_SECTION * band.sections.len() as u64 * n * s, ..Default::default() },
            covariance: StageCounts { flops: 2 * s * tri + n, ..Default::default() },
            whitening: StageCounts { flops: 4 * n * n * n + 2 * n * n, ..Default::default() },
            logm: StageCounts { flops: logm.flops(), ..Default::default() },
            classifier: StageCounts::default(),
        },
        Mode::Quant => OpCounters {
            filter: StageCounts {
                fixed_macs: band.cascade.macs_per_sample() * n * s,
                shifts: band.cascade.shifts_per_sample() * n * s,
                ..Default::default()
            },
            covariance: StageCounts { fixed_macs: s * tri, shifts: tri, ..Default::default() },
            whitening: StageCounts { fixed_macs: whitening_macs(model.n_channels), shifts: n * n, ..Default::default() },
            // dequantize n^2 entries, requantize tri features
            logm: StageCounts { flops: logm.flops() + n * n + tri, ..Default::default() },
            classifier: StageCounts::default(),
        },
    }
}

fn covariance_quant_band(x: &FixedMatrix, model: &ModelParams, band: &BandModel) -> FixedMatrix {
    covariance_from_accumulated(x.rows(), &covariance_accumulate(x), 2 * x.exponent, model.rho, band.cov_shift)
}

fn band_float(trial: &TrialWindow, model: &ModelParams, b: usize) -> Result<(Vec<f64>, OpCounters)> {
    let band = &model.bands[b];
    let x = filtered_float(trial, &band.sections);
    let c = covariance_float(&x, model.rho);
    let w = whiten_float(&c, &band.cref_float);
    let mut flops = FlopCount::default();
    let f = log_features_f64(&w, model.lambda_min, &mut flops).map_err(|e| e.in_band(b))?;
    Ok((f, band_counts(model, b, Mode::Float, &flops)))
}

fn band_quant(xq: &FixedMatrix, model: &ModelParams, b: usize) -> Result<(Vec<f64>, OpCounters)> {
    let band = &model.bands[b];
    let x = filtered_quant(xq, &band.cascade);
    let c = covariance_quant_band(&x, model, band);
    let w = whiten_quant(&c, &band.cref, band.whiten_shift);
    let mut flops = FlopCount::default();
    let f = log_features_f32(&w, model.lambda_min, &mut flops).map_err(|e| e.in_band(b))?;
    Ok((f, band_counts(model, b, Mode::Quant, &flops)))
}

fn gather(parts: Vec<Result<(Vec<f64>, OpCounters)>>) -> Result<(Vec<f64>, OpCounters)> {
    let mut features = Vec::new();
    let mut ops = OpCounters::default();
    for part in parts {
        let (f, o) = part?;
        features.extend(f);
        ops += o;
    }
    Ok((features, ops))
}

fn features_float_counted<E: Executor>(trial: &TrialWindow, model: &ModelParams, exec: &E) -> Result<(Vec<f64>, OpCounters)> {
    check_trial(trial, model)?;
    gather(exec.map(model.bands.len(), |b| band_float(trial, model, b)))
}

fn features_quant_counted<E: Executor>(trial: &TrialWindow, model: &ModelParams, exec: &E) -> Result<(QuantFeatures, OpCounters)> {
    check_trial(trial, model)?;
    let xq = trial.quantize(model.input_exponent);
    let (f, ops) = gather(exec.map(model.bands.len(), |b| band_quant(&xq, model, b)))?;
    Ok((requantize_features(&f, model.feature_exponent), ops))
}

/// Full-precision features, bands concatenated in order.
pub fn extract_features_float<E: Executor>(trial: &TrialWindow, model: &ModelParams, exec: &E) -> Result<Vec<f64>> {
    features_float_counted(trial, model, exec).map(|(f, _)| f)
}

/// 8-bit features at the model's feature exponent.
pub fn extract_features_quant<E: Executor>(trial: &TrialWindow, model: &ModelParams, exec: &E) -> Result<QuantFeatures> {
    features_quant_counted(trial, model, exec).map(|(f, _)| f)
}

enum Features {
    Float(Vec<f64>),
    Quant(QuantFeatures),
}

fn classify(features: Features, model: &ModelParams, ops: &mut OpCounters) -> Prediction {
    let (n_classes, n_features) = (model.n_classes() as u64, model.n_features() as u64);
    match features {
        Features::Float(f) => {
            let scores = model.svm_float.scores(&f);
            ops.classifier.flops = 2 * n_classes * n_features;
            Prediction { class: crate::model::argmax(&scores), scores: Scores::Float(scores) }
        }
        Features::Quant(f) => {
            let (scores, class) = svm_infer_quant(&f.values, &model.svm);
            ops.classifier.fixed_macs = n_classes * n_features;
            Prediction { class, scores: Scores::Quant(scores) }
        }
    }
}

fn infer_counted<E: Executor>(trial: &TrialWindow, model: &ModelParams, mode: Mode, exec: &E) -> Result<(Prediction, OpCounters)> {
    let (features, mut ops) = match mode {
        Mode::Float => features_float_counted(trial, model, exec).map(|(f, o)| (Features::Float(f), o))?,
        Mode::Quant => features_quant_counted(trial, model, exec).map(|(f, o)| (Features::Quant(f), o))?,
    };
    let p = classify(features, model, &mut ops);
    Ok((p, ops))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Filter,
    Covariance,
    Whitening,
    Logm,
    Classifier,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Filter, Stage::Covariance, Stage::Whitening, Stage::Logm, Stage::Classifier];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Covariance => "covariance",
            Stage::Whitening => "whitening",
            Stage::Logm => "logm",
            Stage::Classifier => "classifier",
        }
    }
}

/// Sequential inference that finishes each stage for all bands before
/// starting the next and calls `mark(stage)` at every stage boundary.
/// Predictions and counts equal those of [`infer`] and [`count_ops`].
pub fn infer_staged(
    trial: &TrialWindow,
    model: &ModelParams,
    mode: Mode,
    mark: &mut dyn FnMut(Stage),
) -> Result<(Prediction, OpCounters)> {
    check_trial(trial, model)?;
    let bands = &model.bands;
    let mut flops = alloc::vec![FlopCount::default(); bands.len()];
    let features = match mode {
        Mode::Float => {
            let x: Vec<Mat<f64>> = bands.iter().map(|b| filtered_float(trial, &b.sections)).collect();
            mark(Stage::Filter);
            let c: Vec<Mat<f64>> = x.iter().map(|x| covariance_float(x, model.rho)).collect();
            mark(Stage::Covariance);
            let w: Vec<Mat<f64>> = c.iter().zip(bands).map(|(c, b)| whiten_float(c, &b.cref_float)).collect();
            mark(Stage::Whitening);
            let mut f = Vec::with_capacity(model.n_features());
            for (b, (w, ops)) in w.iter().zip(flops.iter_mut()).enumerate() {
                f.extend(log_features_f64(w, model.lambda_min, ops).map_err(|e| e.in_band(b))?);
            }
            mark(Stage::Logm);
            Features::Float(f)
        }
        Mode::Quant => {
            let xq = trial.quantize(model.input_exponent);
            let x: Vec<FixedMatrix> = bands.iter().map(|b| filtered_quant(&xq, &b.cascade)).collect();
            mark(Stage::Filter);
            let c: Vec<FixedMatrix> = x.iter().zip(bands).map(|(x, b)| covariance_quant_band(x, model, b)).collect();
            mark(Stage::Covariance);
            let w: Vec<FixedMatrix> = c.iter().zip(bands).map(|(c, b)| whiten_quant(c, &b.cref, b.whiten_shift)).collect();
            mark(Stage::Whitening);
            let mut f = Vec::with_capacity(model.n_features());
            for (b, (w, ops)) in w.iter().zip(flops.iter_mut()).enumerate() {
                f.extend(log_features_f32(w, model.lambda_min, ops).map_err(|e| e.in_band(b))?);
            }
            let q = requantize_features(&f, model.feature_exponent);
            mark(Stage::Logm);
            Features::Quant(q)
        }
    };
    let mut ops = OpCounters::default();
    for (b, f) in flops.iter().enumerate() {
        ops += band_counts(model, b, mode, f);
    }
    let p = classify(features, model, &mut ops);
    mark(Stage::Classifier);
    Ok((p, ops))
}

pub fn infer<E: Executor>(trial: &TrialWindow, model: &ModelParams, mode: Mode, exec: &E) -> Result<Prediction> {
    infer_counted(trial, model, mode, exec).map(|(p, _)| p)
}

/// One prediction per trial, trials fanned out over `exec`.
pub fn infer_batch<E: Executor>(trials: &[TrialWindow], model: &ModelParams, mode: Mode, exec: &E) -> Result<Vec<Prediction>> {
    exec.map(trials.len(), |i| infer(&trials[i], model, mode, &Sequential)).into_iter().collect()
}

/// Operation counts of one forward pass over `trial`.
pub fn count_ops(trial: &TrialWindow, model: &ModelParams, mode: Mode) -> Result<OpCounters> {
    infer_counted(trial, model, mode, &Sequential).map(|(_, ops)| ops)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// `None` for a class with no trials.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row: u64 = self.confusion[class].iter().sum();
        (row > 0).then(|| self.confusion[class][class] as f64 / row as f64)
    }
}

pub fn evaluate<E: Executor>(trials: &[TrialWindow], model: &ModelParams, mode: Mode, exec: &E) -> Result<Evaluation> {
    let n_classes = model.n_classes();
    let mut labels = Vec::with_capacity(trials.len());
    for t in trials {
        let l = t.label.ok_or(Error::UnlabeledDataset)?;
        if l as usize >= n_classes {
            return Err(Error::Label { label: l, n_classes });
        }
        labels.push(l as usize);
    }
    if trials.is_empty() {
        return Err(Error::UnlabeledDataset);
    }
    let predictions = infer_batch(trials, model, mode, exec)?;
    let mut confusion = alloc::vec![alloc::vec![0u64; n_classes]; n_classes];
    for (p, &l) in predictions.iter().zip(&labels) {
        confusion[l][p.class] += 1;
    }
    Ok(Evaluation { confusion })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub bands: Vec<BandSpec>,
    /// Lowpass-prototype order, one second-order section per order.
    pub filter_order: usize,
    pub rho: f64,
    pub lambda_min: f64,
    pub n_classes: usize,
    pub svm: SvmConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bands: default_bands(),
            filter_order: 2,
            rho: 1.0,
            lambda_min: DEFAULT_LAMBDA_MIN,
            n_classes: 4,
            svm: SvmConfig::default(),
        }
    }
}

struct BandTraining {
    model: BandModel,
    float_features: Vec<Vec<f64>>,
    quant_features: Vec<Vec<f64>>,
}

fn train_band(
    spec: &BandSpec,
    trials: &[TrialWindow],
    quantized: &[FixedMatrix],
    input_exponent: i32,
    cfg: &TrainConfig,
) -> Result<BandTraining> {
    let sections = design_bandpass(spec, cfg.filter_order)?;
    let mut cascade = quantize_cascade(&sections, spec, COEFF_BITS)?;
    cascade.input_exponent = input_exponent;
    let rows: Vec<&[i32]> = quantized.iter().flat_map(|x| x.values().chunks_exact(x.cols())).collect();
    cascade.calibrate_shifts(&rows);

    let covs: Vec<Mat<f64>> = trials.iter().map(|t| covariance_float(&filtered_float(t, &sections), cfg.rho)).collect();
    let cref_float = compute_reference(&covs, cfg.lambda_min)?;
    let cref = quantize_reference(&cref_float);

    let n = trials[0].n_channels;
    let filtered: Vec<FixedMatrix> = quantized.iter().map(|x| filtered_quant(x, &cascade)).collect();
    let acc_exponent = 2 * cascade.output_exponent();
    let accumulated: Vec<Vec<i64>> = filtered.iter().map(covariance_accumulate).collect();
    let rho_acc = libm::ldexp(cfg.rho, -acc_exponent);
    let mut peak = 0.0f64;
    for acc in &accumulated {
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                let v = acc[idx] as f64 + if i == j { rho_acc } else { 0.0 };
                peak = peak.max(v.abs());
                idx += 1;
            }
        }
    }
    let cov_shift = shift_for_range(libm::ceil(peak).min(u64::MAX as f64) as u64, COV_BITS, HEADROOM_BITS);
    let covs_q: Vec<FixedMatrix> = accumulated
        .iter()
        .map(|acc| covariance_from_accumulated(n, acc, acc_exponent, cfg.rho, cov_shift))
        .collect();

    let product_peak = covs_q
        .iter()
        .flat_map(|c| whitening_product(c, &cref))
        .fold(0u64, |m, v| m.max(v.unsigned_abs()));
    let whiten_shift = shift_for_range(product_peak, PRODUCT_BITS, HEADROOM_BITS);

    let mut ops = FlopCount::default();
    let mut quant_features = Vec::with_capacity(trials.len());
    for c in &covs_q {
        quant_features.push(log_features_f32(&whiten_quant(c, &cref, whiten_shift), cfg.lambda_min, &mut ops)?);
    }
    let mut float_features = Vec::with_capacity(trials.len());
    for c in &covs {
        float_features.push(log_features_f64(&whiten_float(c, &cref_float), cfg.lambda_min, &mut ops)?);
    }
    let model = BandModel { spec: *spec, sections, cascade, cov_shift, whiten_shift, cref, cref_float };
    Ok(BandTraining { model, float_features, quant_features })
}

/// Designs and quantizes the filters, learns the per-band references and
/// every dynamic range from the training trials, then fits one SVM on the
/// full-precision features and one on the dequantized 8-bit features.
pub fn train<E: Executor>(trials: &[TrialWindow], cfg: &TrainConfig, exec: &E) -> Result<ModelParams> {
    let first = trials.first().ok_or(Error::EmptyTrainingSet)?;
    let (n_channels, n_samples, fs) = (first.n_channels, first.n_samples, first.sampling_rate_hz);
    let mut labels = Vec::with_capacity(trials.len());
    let mut seen = alloc::vec![false; cfg.n_classes];
    for t in trials {
        if (t.n_channels, t.n_samples, t.sampling_rate_hz) != (n_channels, n_samples, fs) {
            return Err(Error::Shape("training trials differ in shape or sampling rate"));
        }
        let l = t.label.ok_or(Error::UnlabeledDataset)?;
        *seen.get_mut(l as usize).ok_or(Error::Label { label: l, n_classes: cfg.n_classes })? = true;
        labels.push(l);
    }
    if cfg.n_classes < 2 || seen.iter().any(|&s| !s) {
        return Err(Error::DegenerateTrainingSet);
    }
    for b in &cfg.bands {
        b.validate()?;
        if b.sampling_rate_hz != fs {
            return Err(Error::Shape("band sampling rate differs from the data"));
        }
    }

    let peak = trials.iter().fold(0.0f64, |m, t| m.max(t.max_abs()));
    let input_exponent = calibrated_exponent(peak, SAMPLE_BITS);
    let quantized: Vec<FixedMatrix> = trials.iter().map(|t| t.quantize(input_exponent)).collect();

    let per_band = exec.map(cfg.bands.len(), |b| {
        train_band(&cfg.bands[b], trials, &quantized, input_exponent, cfg).map_err(|e| e.in_band(b))
    });
    let per_band: Vec<BandTraining> = per_band.into_iter().collect::<Result<_>>()?;

    let n_features = cfg.bands.len() * vect_len(n_channels);
    let concat = |pick: &dyn Fn(&BandTraining) -> &Vec<Vec<f64>>| -> Vec<f64> {
        let mut out = Vec::with_capacity(trials.len() * n_features);
        for t in 0..trials.len() {
            for band in &per_band {
                out.extend_from_slice(&pick(band)[t]);
            }
        }
        out
    };
    let float_features = concat(&|b| &b.float_features);
    let quant_real = concat(&|b| &b.quant_features);

    let feature_peak = quant_real.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let feature_exponent = calibrated_exponent(feature_peak, SAMPLE_BITS);
    let quant_train = requantize_features(&quant_real, feature_exponent).dequantize();

    let svm_float = svm_train(&float_features, n_features, &labels, cfg.n_classes, &cfg.svm)?;
    let svm_q = svm_train(&quant_train, n_features, &labels, cfg.n_classes, &cfg.svm)?;
    let svm = quantize_svm(&svm_q, feature_exponent);

    Ok(ModelParams {
        bands: per_band.into_iter().map(|b| b.model).collect(),
        n_channels,
        n_samples,
        sampling_rate_hz: fs,
        rho: cfg.rho,
        lambda_min: cfg.lambda_min,
        input_exponent,
        feature_exponent,
        svm,
        svm_float,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::bands_between;
    use crate::model::vect_len;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    /// Spreads the index range over a few scoped threads.
    struct Threaded(usize);

    impl Executor for Threaded {
        fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
        where
            T: Send,
            F: Fn(usize) -> T + Sync,
        {
            let chunk = n.div_ceil(self.0).max(1);
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..n)
                    .step_by(chunk)
                    .map(|lo| {
                        let f = &f;
                        scope.spawn(move || (lo..(lo + chunk).min(n)).map(f).collect::<Vec<T>>())
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
            })
        }
    }

    /// Class `k` adds a 10 + 6k Hz sinusoid to channels `2k..2k+3` over
    /// uniform noise.
    fn toy_trials(per_class: usize, n_channels: usize, n_samples: usize, seed: u64) -> Vec<TrialWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..4 * per_class)
            .map(|i| {
                let k = i % 4;
                let f = 10.0 + 6.0 * k as f64;
                let phase = rng.gen_range(0.0..core::f64::consts::TAU);
                let mut x = Vec::with_capacity(n_channels * n_samples);
                for c in 0..n_channels {
                    let on = (2 * k..2 * k + 3).contains(&c);
                    for n in 0..n_samples {
                        let t = n as f64 / 250.0;
                        let s = if on { 3.0 * libm::sin(2.0 * core::f64::consts::PI * f * t + phase) } else { 0.0 };
                        x.push((s + rng.gen_range(-2.0..2.0)) as f32);
                    }
                }
                TrialWindow::new(n_channels, n_samples, x, Some(k as u8), 250.0).unwrap()
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig { bands: bands_between(8.0, 30.0, 4.0, 250.0), svm: SvmConfig { epochs: 100, ..SvmConfig::default() }, ..TrainConfig::default() }
    }

    fn small() -> &'static (Vec<TrialWindow>, ModelParams) {
        static CELL: OnceLock<(Vec<TrialWindow>, ModelParams)> = OnceLock::new();
        CELL.get_or_init(|| {
            let trials = toy_trials(6, 10, 400, 1);
            let model = train(&trials, &small_config(), &Sequential).unwrap();
            (trials, model)
        })
    }

    fn default_shape() -> &'static (Vec<TrialWindow>, ModelParams) {
        static CELL: OnceLock<(Vec<TrialWindow>, ModelParams)> = OnceLock::new();
        CELL.get_or_init(|| {
            let trials = toy_trials(2, 22, 875, 2);
            let cfg = TrainConfig { svm: SvmConfig { epochs: 20, ..SvmConfig::default() }, ..TrainConfig::default() };
            let model = train(&trials, &cfg, &Sequential).unwrap();
            (trials, model)
        })
    }

    #[test]
    fn window_selection() {
        let t = toy_trials(1, 2, 1500, 3).remove(0);
        let w = select_window(&t, 2.0, 3.5).unwrap();
        assert_eq!(w.n_samples(), 875);
        assert_eq!(w.channel(1)[0], t.channel(1)[500]);
        assert_eq!(w.channel(1)[874], t.channel(1)[1374]);
        let exact = t.window(100, 875).unwrap();
        assert_eq!(select_window(&exact, 2.0, 3.5).unwrap(), exact);
        assert_eq!(select_window(&t, 5.0, 3.5), Err(Error::Shape("window exceeds trial")));
    }

    #[test]
    fn trial_shape_is_checked() {
        assert!(TrialWindow::new(2, 3, alloc::vec![0.0; 5], None, 250.0).is_err());
        let (trials, model) = small();
        let short = trials[0].window(0, 300).unwrap();
        assert!(infer(&short, model, Mode::Float, &Sequential).is_err());
    }

    #[test]
    fn default_shape_op_counts() {
        let (trials, model) = default_shape();
        assert_eq!(model.n_features(), 4554);
        let q = count_ops(&trials[0], model, Mode::Quant).unwrap();
        assert_eq!(q.filter.fixed_macs, 3_465_000);
        assert_eq!(q.filter.fixed_macs, 10 * 875 * 22 * 18);
        assert_eq!(q.covariance.fixed_macs, 18 * 221_375);
        assert_eq!(q.whitening.fixed_macs, 18 * (22 * 22 * 22 + 22 * 253));
        assert_eq!(q.classifier.fixed_macs, 4 * 4554);
        assert_eq!(q.filter.shifts, 4 * 875 * 22 * 18);
        let f = count_ops(&trials[0], model, Mode::Float).unwrap();
        assert_eq!(f.filter.flops, 2 * 3_465_000);
        assert_eq!(f.total().fixed_macs, 0);
        assert!(f.logm.flops > 0 && q.logm.flops > 0);
    }

    #[test]
    fn zero_band_model_counts_nothing() {
        let trials = toy_trials(1, 4, 200, 4);
        let cfg = TrainConfig { bands: Vec::new(), svm: SvmConfig { epochs: 5, ..SvmConfig::default() }, ..TrainConfig::default() };
        let model = train(&trials, &cfg, &Sequential).unwrap();
        assert_eq!(model.n_features(), 0);
        for mode in [Mode::Float, Mode::Quant] {
            assert_eq!(count_ops(&trials[0], &model, mode).unwrap(), OpCounters::default());
        }
    }

    #[test]
    fn zero_trial_float_features_come_from_the_model() {
        let (trials, model) = small();
        let zero = TrialWindow::new(10, 400, alloc::vec![0.0; 4000], None, 250.0).unwrap();
        let f = extract_features_float(&zero, model, &Sequential).unwrap();
        let mut expect = Vec::new();
        for band in &model.bands {
            let r = &band.cref_float;
            let w = r.matmul(&Mat::identity(10).scale(model.rho)).matmul(r).symmetrized();
            expect.extend(vect(&matrix_logarithm(&w, model.lambda_min, &mut FlopCount::default()).unwrap()));
        }
        assert_eq!(f.len(), expect.len());
        assert!(f.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-9));
        let q1 = extract_features_quant(&zero, model, &Sequential).unwrap();
        let q2 = extract_features_quant(&zero, model, &Sequential).unwrap();
        assert_eq!(q1, q2);
        assert_ne!(extract_features_float(&trials[0], model, &Sequential).unwrap(), f);
    }

    #[test]
    fn scheduling_does_not_change_results() {
        let (trials, model) = small();
        for t in trials.iter().take(4) {
            let a = extract_features_float(t, model, &Sequential).unwrap();
            let b = extract_features_float(t, model, &Threaded(5)).unwrap();
            assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(extract_features_quant(t, model, &Sequential).unwrap(), extract_features_quant(t, model, &Threaded(3)).unwrap());
        }
        let seq = infer_batch(trials, model, Mode::Quant, &Sequential).unwrap();
        assert_eq!(seq, infer_batch(trials, model, Mode::Quant, &Threaded(4)).unwrap());
        let again = train(trials, &small_config(), &Threaded(3)).unwrap();
        assert_eq!(&again, model);
    }

    #[test]
    fn references_whiten_the_training_mean() {
        let (trials, model) = small();
        for band in &model.bands {
            let mut mean = Mat::zeros(10, 10);
            for t in trials {
                let c = covariance_float(&filtered_float(t, &band.sections), model.rho);
                mean.as_slice_mut().iter_mut().zip(c.as_slice()).for_each(|(m, &v)| *m += v / trials.len() as f64);
            }
            let r = &band.cref_float;
            assert!(r.matmul(&mean).matmul(r).sub(&Mat::identity(10)).frobenius() < 1e-5);
        }
    }

    #[test]
    fn calibrated_ranges_hold_on_training_data() {
        let (trials, model) = small();
        let mut saturated = 0;
        for t in trials {
            saturated += extract_features_quant(t, model, &Sequential).unwrap().saturated();
        }
        let rate = saturated as f64 / (trials.len() * model.n_features()) as f64;
        assert!(rate < 0.01, "{rate}");
        assert!(model.bands.iter().all(|b| b.cref.bits == 11 && b.cref.is_symmetric()));
        assert!(model.bands.iter().all(|b| b.cascade.input_exponent == model.input_exponent));
    }

    #[test]
    fn quant_features_track_float_features() {
        let (trials, model) = small();
        let mut worst = 0.0f64;
        for t in trials {
            let f = extract_features_float(t, model, &Sequential).unwrap();
            let q = extract_features_quant(t, model, &Sequential).unwrap().dequantize();
            let num: f64 = f.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = f.iter().map(|a| a * a).sum();
            worst = worst.max((num / den).sqrt());
        }
        // measured: 0.058
        assert!(worst < 0.08, "{worst}");
    }

    #[test]
    fn toy_problem_is_learned() {
        let (_, model) = small();
        let test = toy_trials(10, 10, 400, 99);
        let ef = evaluate(&test, model, Mode::Float, &Sequential).unwrap();
        let eq = evaluate(&test, model, Mode::Quant, &Sequential).unwrap();
        assert_eq!(ef.total(), 40);
        assert_eq!(eq.confusion.iter().flatten().sum::<u64>(), 40);
        // measured: 1.0 in both modes
        assert!(ef.accuracy() >= 0.95 && eq.accuracy() >= 0.95, "{} {}", ef.accuracy(), eq.accuracy());
    }

    #[test]
    fn training_input_errors() {
        let cfg = small_config();
        assert_eq!(train(&[], &cfg, &Sequential), Err(Error::EmptyTrainingSet));
        let mut trials = toy_trials(1, 4, 200, 5);
        trials.truncate(3);
        assert_eq!(train(&trials, &cfg, &Sequential), Err(Error::DegenerateTrainingSet));
        trials[0].label = None;
        assert_eq!(train(&trials, &cfg, &Sequential), Err(Error::UnlabeledDataset));
        trials[0].label = Some(9);
        assert_eq!(train(&trials, &cfg, &Sequential), Err(Error::Label { label: 9, n_classes: 4 }));
    }

    #[test]
    fn evaluation_needs_labels() {
        let (trials, model) = small();
        let mut t = trials[..2].to_vec();
        t[1].label = None;
        assert_eq!(evaluate(&t, model, Mode::Float, &Sequential), Err(Error::UnlabeledDataset));
    }

    #[test]
    fn constant_predictions_score_chance_on_balanced_data() {
        let (trials, model) = small();
        let mut m = model.clone();
        m.svm.weights.iter_mut().for_each(|w| *w = 0);
        m.svm.biases = alloc::vec![0, 0, 5, 0];
        let e = evaluate(trials, &m, Mode::Quant, &Sequential).unwrap();
        assert_eq!(e.accuracy(), 0.25);
        assert_eq!(e.recall(2), Some(1.0));
        assert_eq!(e.recall(0), Some(0.0));
    }

    #[test]
    fn staged_inference_matches_fused() {
        let (trials, model) = small();
        for mode in [Mode::Float, Mode::Quant] {
            let mut marks = Vec::new();
            let (p, ops) = infer_staged(&trials[3], model, mode, &mut |s| marks.push(s)).unwrap();
            assert_eq!(marks, Stage::ALL.to_vec());
            assert_eq!(p, infer(&trials[3], model, mode, &Threaded(2)).unwrap());
            assert_eq!(ops, count_ops(&trials[3], model, mode).unwrap());
        }
    }

    #[test]
    fn vect_lengths_per_band() {
        let (t, model) = small();
        assert_eq!(extract_features_float(&t[0], model, &Sequential).unwrap().len(), model.bands.len() * vect_len(10));
    }
}
