//! Bandpass filter bank: Butterworth design, 12-bit second-order-section
//! quantization, and Direct-Form I evaluation in float and in integers.
//!
//! Quantized data flow through one section `k` (input exponent `e`):
//!
//! ```text
//! u: 8-bit input at 2^e
//! acc = (b0 u[n] + b1 u[n-1] + b2 u[n-2]) << F  -  a1 v[n-1] - a2 v[n-2]
//! v[n] = sat16(round(acc / 2^(-coeff_exponent)))     16-bit register at 2^(e-F)
//! out  = sat8(round(v[n] / 2^output_shift))          next input at 2^(e-F+shift)
//! ```
//!
//! `F` is [`REGISTER_FRACTION_BITS`]. Direct-Form I registers only ever hold
//! section inputs and outputs, so with `F = 7` no register can leave 16 bits
//! for any 8-bit input as long as the section's impulse response has an L1
//! norm below 2 (it is about 1.8 for the designed bands).

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::fixedpoint::{fits, range_exponent, saturate, shift_for_range, shift_round, shift_round_signed};
use crate::{Error, Result};

pub const COEFF_BITS: u32 = 12;
pub const REGISTER_BITS: u32 = 16;
pub const SAMPLE_BITS: u32 = 8;
/// Extra fraction bits of the 16-bit output register over the section input.
pub const REGISTER_FRACTION_BITS: u32 = 7;
/// Multiply-accumulates per output sample of one section.
pub const MACS_PER_SECTION: u64 = 5;
/// Rescaling shifts per output sample of one section.
pub const SHIFTS_PER_SECTION: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub sampling_rate_hz: f64,
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64, sampling_rate_hz: f64) -> Result<Self> {
        let band = BandSpec { low_hz, high_hz, sampling_rate_hz };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < self.sampling_rate_hz / 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::BandEdges { low_hz: self.low_hz, high_hz: self.high_hz, sampling_rate_hz: self.sampling_rate_hz })
        }
    }

    /// Digital frequency (Hz) where the bilinear map sends the analog
    /// geometric center; the Butterworth bandpass has unit gain there.
    pub fn center_hz(&self) -> f64 {
        let (w1, w2) = self.prewarped();
        let w0 = libm::sqrt(w1 * w2);
        libm::atan(w0 / (2.0 * self.sampling_rate_hz)) * self.sampling_rate_hz / PI
    }

    fn prewarped(&self) -> (f64, f64) {
        let fs = self.sampling_rate_hz;
        let warp = |f: f64| 2.0 * fs * libm::tan(PI * f / fs);
        (warp(self.low_hz), warp(self.high_hz))
    }
}

/// Eighteen contiguous 2 Hz bands covering 4 to 40 Hz at 250 Hz.
pub fn default_bands() -> Vec<BandSpec> {
    bands_between(4.0, 40.0, 2.0, 250.0)
}

pub fn bands_between(low_hz: f64, high_hz: f64, width_hz: f64, sampling_rate_hz: f64) -> Vec<BandSpec> {
    let count = libm::round((high_hz - low_hz) / width_hz) as usize;
    (0..count)
        .map(|i| BandSpec {
            low_hz: low_hz + i as f64 * width_hz,
            high_hz: low_hz + (i + 1) as f64 * width_hz,
            sampling_rate_hz,
        })
        .collect()
}

/// Biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SosSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SosSection {
    pub const IDENTITY: SosSection = SosSection { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    pub fn coefficients(&self) -> [f64; 5] {
        [self.b0, self.b1, self.b2, self.a1, self.a2]
    }

    pub fn from_coefficients(c: [f64; 5]) -> Self {
        SosSection { b0: c[0], b1: c[1], b2: c[2], a1: c[3], a2: c[4] }
    }

    /// Both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        is_stable(self.a1, self.a2)
    }

    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b0 + z_inv * (self.b1 + z_inv * self.b2);
        let den = 1.0 + z_inv * (self.a1 + z_inv * self.a2);
        num / den
    }
}

fn is_stable(a1: f64, a2: f64) -> bool {
    a2.abs() < 1.0 && a1.abs() < 1.0 + a2
}

/// Frequency response of a cascade at `freq_hz`.
pub fn response(sections: &[SosSection], freq_hz: f64, sampling_rate_hz: f64) -> Complex64 {
    let w = 2.0 * PI * freq_hz / sampling_rate_hz;
    let z_inv = Complex64::from_polar(1.0, -w);
    sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
}

pub fn magnitude_db(sections: &[SosSection], freq_hz: f64, sampling_rate_hz: f64) -> f64 {
    20.0 * libm::log10(response(sections, freq_hz, sampling_rate_hz).norm())
}

/// Butterworth bandpass of lowpass-prototype order `order`, bilinear
/// transform with prewarped edges, as `order` sections. Each section has its
/// zero pair at `z = +-1` and unit gain at the band center.
pub fn design_bandpass(band: &BandSpec, order: usize) -> Result<Vec<SosSection>> {
    band.validate()?;
    assert!(order >= 1, "filter order must be at least 1");
    let fs = band.sampling_rate_hz;
    let (w1, w2) = band.prewarped();
    let w0sq = w1 * w2;
    let bw = w2 - w1;

    let mut upper = Vec::new();
    let mut real = Vec::new();
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let disc = (p * p * bw * bw - 4.0 * w0sq).sqrt();
        for s in [(p * bw + disc) / 2.0, (p * bw - disc) / 2.0] {
            let z = (1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs));
            if z.im > 1e-12 {
                upper.push(z);
            } else if z.im.abs() <= 1e-12 {
                real.push(z.re);
            }
        }
    }
    real.sort_by(|a, b| a.total_cmp(b));

    let mut denominators: Vec<(f64, f64)> = upper.iter().map(|z| (-2.0 * z.re, z.norm_sqr())).collect();
    denominators.extend(real.chunks(2).map(|pair| (-(pair[0] + pair[1]), pair[0] * pair[1])));
    debug_assert_eq!(denominators.len(), order);

    let w_center = 2.0 * PI * band.center_hz() / fs;
    let z_inv = Complex64::from_polar(1.0, -w_center);
    Ok(denominators
        .into_iter()
        .map(|(a1, a2)| {
            let raw = SosSection { b0: 1.0, b1: 0.0, b2: -1.0, a1, a2 };
            let g = 1.0 / raw.response(z_inv).norm();
            SosSection { b0: g, b1: 0.0, b2: -g, a1, a2 }
        })
        .collect())
}

/// Direct-Form I cascade with zero initial state.
pub fn filter_apply_float(x: &[f64], sections: &[SosSection]) -> Vec<f64> {
    let mut signal = x.to_vec();
    for s in sections {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in signal.iter_mut() {
            let x0 = *v;
            let y0 = s.b0 * x0 + s.b1 * x1 + s.b2 * x2 - s.a1 * y1 - s.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *v = y0;
        }
    }
    signal
}

/// One second-order section with integer coefficients `c * 2^coeff_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedSection {
    /// `b0, b1, b2, a1, a2`, each within [`COEFF_BITS`] signed bits.
    pub coeffs: [i32; 5],
    pub coeff_exponent: i32,
    pub output_shift: u32,
}

impl QuantizedSection {
    pub fn dequantized(&self) -> SosSection {
        let c = self.coeffs.map(|v| libm::ldexp(v as f64, self.coeff_exponent));
        SosSection::from_coefficients(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedSosCascade {
    pub sections: Vec<QuantizedSection>,
    /// Exponent of the 8-bit input stream.
    pub input_exponent: i32,
}

impl QuantizedSosCascade {
    /// Exponent of the 8-bit output stream.
    pub fn output_exponent(&self) -> i32 {
        self.sections.iter().fold(self.input_exponent, |e, s| {
            e - REGISTER_FRACTION_BITS as i32 + s.output_shift as i32
        })
    }

    pub fn macs_per_sample(&self) -> u64 {
        MACS_PER_SECTION * self.sections.len() as u64
    }

    pub fn shifts_per_sample(&self) -> u64 {
        SHIFTS_PER_SECTION * self.sections.len() as u64
    }

    /// Re-derives every section's output shift from representative inputs:
    /// section `k` is run on the rescaled output of section `k - 1` and its
    /// peak register magnitude is fitted into 8 bits with one spare bit.
    pub fn calibrate_shifts(&mut self, signals: &[&[i32]]) {
        let mut current: Vec<Vec<i32>> = signals.iter().map(|s| s.to_vec()).collect();
        for k in 0..self.sections.len() {
            let mut peak = 0u64;
            let registers: Vec<Vec<i32>> = current
                .iter()
                .map(|u| {
                    let v = section_registers(&self.sections[k], u, &mut |_| {});
                    peak = v.iter().fold(peak, |m, &x| m.max(x.unsigned_abs() as u64));
                    v
                })
                .collect();
            let shift = shift_for_range(peak, SAMPLE_BITS, 1);
            self.sections[k].output_shift = shift;
            current = registers
                .iter()
                .map(|v| v.iter().map(|&x| narrow_sample(x, shift)).collect())
                .collect();
        }
    }
}

#[inline]
fn narrow_sample(register: i32, shift: u32) -> i32 {
    saturate(shift_round(register as i64, shift), SAMPLE_BITS) as i32
}

/// Runs one section over `u` and returns its 16-bit output registers.
/// `observe` sees every register value before saturation.
#[inline]
fn section_registers(s: &QuantizedSection, u: &[i32], observe: &mut impl FnMut(i64)) -> Vec<i32> {
    let [b0, b1, b2, a1, a2] = s.coeffs.map(|c| c as i64);
    let down = -s.coeff_exponent;
    let (mut u1, mut u2, mut v1, mut v2) = (0i64, 0i64, 0i64, 0i64);
    u.iter()
        .map(|&x| {
            let u0 = x as i64;
            let ff = (b0 * u0 + b1 * u1 + b2 * u2) << REGISTER_FRACTION_BITS;
            let acc = ff - a1 * v1 - a2 * v2;
            let wide = shift_round_signed(acc, down);
            observe(wide);
            let v0 = saturate(wide, REGISTER_BITS);
            u2 = u1;
            u1 = u0;
            v2 = v1;
            v1 = v0;
            v0 as i32
        })
        .collect()
}

/// Quantizes each section to `coeff_bits` with its own power-of-two range
/// and sets provisional output shifts from a full-scale calibration sweep
/// (band-center sinusoid plus white noise). `input_exponent` starts at 0.
pub fn quantize_cascade(sections: &[SosSection], band: &BandSpec, coeff_bits: u32) -> Result<QuantizedSosCascade> {
    let mut quantized = Vec::with_capacity(sections.len());
    for (idx, s) in sections.iter().enumerate() {
        let c = s.coefficients();
        let peak = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut exponent = range_exponent(peak, coeff_bits, 0);
        let coeffs = loop {
            let q = c.map(|x| libm::round(libm::ldexp(x, -exponent)) as i64);
            if q.iter().all(|&v| fits(v, coeff_bits)) {
                break q.map(|v| v as i32);
            }
            exponent += 1;
        };
        let section = QuantizedSection { coeffs, coeff_exponent: exponent, output_shift: 0 };
        let d = section.dequantized();
        if !is_stable(d.a1, d.a2) {
            return Err(Error::UnstableFilter { section: idx });
        }
        quantized.push(section);
    }
    let mut cascade = QuantizedSosCascade { sections: quantized, input_exponent: 0 };
    let sweep = calibration_sweep(band, 2048);
    cascade.calibrate_shifts(&[&sweep]);
    Ok(cascade)
}

fn calibration_sweep(band: &BandSpec, len: usize) -> Vec<i32> {
    let w = 2.0 * PI * band.center_hz() / band.sampling_rate_hz;
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    (0..len)
        .map(|n| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let noise = (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            let x = 127.0 * libm::sin(w * n as f64) + 32.0 * noise;
            saturate(libm::round(x) as i64, SAMPLE_BITS) as i32
        })
        .collect()
}

/// Integer Direct-Form I cascade with zero initial state; input and output
/// are 8-bit samples at the cascade's input/output exponents.
pub fn filter_apply_quant(x: &[i32], cascade: &QuantizedSosCascade) -> Vec<i32> {
    filter_apply_quant_observed(x, cascade, &mut |_, _| {})
}

/// Same as [`filter_apply_quant`]; `observe(section, value)` receives every
/// 16-bit register value before saturation.
pub fn filter_apply_quant_observed(
    x: &[i32],
    cascade: &QuantizedSosCascade,
    observe: &mut impl FnMut(usize, i64),
) -> Vec<i32> {
    let mut signal: Vec<i32> = x.iter().map(|&v| saturate(v as i64, SAMPLE_BITS) as i32).collect();
    for (k, s) in cascade.sections.iter().enumerate() {
        let registers = section_registers(s, &signal, &mut |v| observe(k, v));
        signal = registers.iter().map(|&v| narrow_sample(v, s.output_shift)).collect();
    }
    signal
}
