//! Seeded synthetic motor-imagery-like trials.
//!
//! Every channel carries independent pink noise. A trial of class `k` adds
//! one band-limited source in the class's frequency band, mixed with random
//! gains into the class's channel group. Each trial draws from its own
//! ChaCha stream, so a trial depends only on the seed and its index.

use mrc_core::filterbank::{design_bandpass, filter_apply_float, BandSpec};
use mrc_core::TrialWindow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

/// `(low, high)` Hz of the class sources.
pub const CLASS_BANDS: [(f64, f64); 4] = [(8.0, 12.0), (18.0, 24.0), (12.0, 16.0), (26.0, 32.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sampling_rate_hz: f64,
    /// Background standard deviation (arbitrary units, read as microvolts).
    pub noise_std: f64,
    /// Class source standard deviation relative to `noise_std`.
    pub source_gain: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trials: 200,
            n_channels: 22,
            n_samples: 875,
            sampling_rate_hz: 250.0,
            noise_std: 10.0,
            source_gain: 0.5,
            seed: 0,
        }
    }
}

/// Channels of class `k`: the `k`-th of four equal contiguous groups.
pub fn class_channels(k: usize, n_channels: usize) -> std::ops::Range<usize> {
    let width = (n_channels / 4).max(1);
    let lo = (k * width).min(n_channels.saturating_sub(1));
    lo..(lo + width).min(n_channels)
}

struct Pink {
    b: [f64; 7],
}

impl Pink {
    fn new() -> Self {
        Pink { b: [0.0; 7] }
    }

    /// Kellet's 7-pole approximation of a -10 dB/decade spectrum.
    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let out = b[..6].iter().sum::<f64>() + b[6] + white * 0.5362;
        b[6] = white * 0.115926;
        out
    }
}

const BURN_IN: usize = 500;
/// Standard deviation of [`Pink`] driven by unit white noise (3.03 measured).
const PINK_STD: f64 = 3.0;

pub fn generate(cfg: &SynthConfig) -> Result<Vec<TrialWindow>> {
    let fs = cfg.sampling_rate_hz;
    let filters = CLASS_BANDS
        .iter()
        .map(|&(lo, hi)| design_bandpass(&BandSpec::new(lo, hi, fs)?, 2))
        .collect::<mrc_core::Result<Vec<_>>>()?;
    let len = cfg.n_samples + BURN_IN;
    (0..cfg.n_trials)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let class = i % 4;
            let scale = cfg.noise_std * rng.gen_range(0.8..1.25) / PINK_STD;
            let mut data = Vec::with_capacity(cfg.n_channels * cfg.n_samples);
            let mut channels: Vec<Vec<f64>> = (0..cfg.n_channels)
                .map(|_| {
                    let mut pink = Pink::new();
                    (0..len).map(|_| pink.next(rng.sample(StandardNormal)) * scale).collect()
                })
                .collect();
            let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let source = filter_apply_float(&white, &filters[class]);
            let amp = cfg.source_gain * cfg.noise_std * rng.gen_range(0.7..1.3);
            let norm = amp / band_rms(&source[BURN_IN..]);
            for c in class_channels(class, cfg.n_channels) {
                let g = rng.gen_range(0.5..1.0) * norm;
                channels[c].iter_mut().zip(&source).for_each(|(x, s)| *x += g * s);
            }
            for ch in &channels {
                data.extend(ch[BURN_IN..].iter().map(|&v| v as f32));
            }
            Ok(TrialWindow::new(cfg.n_channels, cfg.n_samples, data, Some(class as u8), fs)?)
        })
        .collect()
}

fn band_rms(x: &[f64]) -> f64 {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    ms.sqrt().max(1e-12)
}
