//! Binary `MRCM` model files, little-endian.
//!
//! ```text
//! "MRCM" | version u16 = 1
//! dimensions   bands u16 | channels u16 | features u32 | classes u16
//! settings     samples u32 | sampling rate f64 | rho f64 | lambda_min f64
//!              | input exponent i8 | per band: low f64, high f64
//! filters      per band: sections u8, per section 5 x i16 coefficients,
//!              coefficient exponent i8, output shift u8
//! shifts       per band: covariance shift u8, whitening shift u8
//! references   per band: upper triangle i16 x n(n+1)/2, exponent i8
//! features     exponent i8
//! svm          weights i8 (class-major) | weight exponent i8 | biases i32
//! float shadow per band per section 5 x f64 | per band reference upper
//!              triangle f64 | svm weights f64 | svm biases f64
//! ```

use std::fs;
use std::path::Path;

use mrc_core::filterbank::{BandSpec, QuantizedSection, QuantizedSosCascade, SosSection, COEFF_BITS};
use mrc_core::fixedpoint::{fits, FixedMatrix};
use mrc_core::model::{vect_len, BandModel, LinearSvm};
use mrc_core::riemann::REF_BITS;
use mrc_core::{Mat, ModelParams, SvmParams};

use crate::bytes::{Put, Reader};
use crate::error::{MrcError, Result};

pub const MAGIC: &[u8; 4] = b"MRCM";
pub const VERSION: u16 = 1;

fn small<T: TryFrom<i64>>(v: i64, at: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| MrcError::Format {
        what: "model",
        offset: at,
        reason: format!("{what} {v} does not fit its field"),
    })
}

fn upper<T: Copy>(n: usize, get: impl Fn(usize, usize) -> T) -> Vec<T> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| get(i, j)).collect()
}

fn mirrored<T: Copy + Default>(n: usize, tri: &[T]) -> Vec<T> {
    let mut full = vec![T::default(); n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            full[i * n + j] = tri[k];
            full[j * n + i] = tri[k];
            k += 1;
        }
    }
    full
}

pub fn encode(m: &ModelParams) -> Result<Vec<u8>> {
    let n = m.n_channels;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.put_u16(VERSION);
    out.put_u16(small(m.bands.len() as i64, out.len(), "band count")?);
    out.put_u16(small(n as i64, out.len(), "channel count")?);
    out.put_u32(small(m.n_features() as i64, out.len(), "feature count")?);
    out.put_u16(small(m.n_classes() as i64, out.len(), "class count")?);

    out.put_u32(small(m.n_samples as i64, out.len(), "sample count")?);
    out.put_f64(m.sampling_rate_hz);
    out.put_f64(m.rho);
    out.put_f64(m.lambda_min);
    out.put_i8(small(m.input_exponent as i64, out.len(), "input exponent")?);
    for b in &m.bands {
        out.put_f64(b.spec.low_hz);
        out.put_f64(b.spec.high_hz);
    }

    for b in &m.bands {
        out.put_u8(small(b.cascade.sections.len() as i64, out.len(), "section count")?);
        for s in &b.cascade.sections {
            for &c in &s.coeffs {
                out.put_i16(small(c as i64, out.len(), "coefficient")?);
            }
            out.put_i8(small(s.coeff_exponent as i64, out.len(), "coefficient exponent")?);
            out.put_u8(small(s.output_shift as i64, out.len(), "section shift")?);
        }
    }
    for b in &m.bands {
        out.put_u8(small(b.cov_shift as i64, out.len(), "covariance shift")?);
        out.put_u8(small(b.whiten_shift as i64, out.len(), "whitening shift")?);
    }
    for b in &m.bands {
        for v in upper(n, |i, j| b.cref.get(i, j)) {
            out.put_i16(v as i16);
        }
        out.put_i8(small(b.cref.exponent as i64, out.len(), "reference exponent")?);
    }
    out.put_i8(small(m.feature_exponent as i64, out.len(), "feature exponent")?);
    for &w in &m.svm.weights {
        out.put_i8(w);
    }
    out.put_i8(small(m.svm.weight_exponent as i64, out.len(), "weight exponent")?);
    for &b in &m.svm.biases {
        out.put_i32(b);
    }

    for b in &m.bands {
        for s in &b.sections {
            for c in s.coefficients() {
                out.put_f64(c);
            }
        }
    }
    for b in &m.bands {
        for v in upper(n, |i, j| b.cref_float[(i, j)]) {
            out.put_f64(v);
        }
    }
    for &w in &m.svm_float.weights {
        out.put_f64(w);
    }
    for &b in &m.svm_float.biases {
        out.put_f64(b);
    }
    Ok(out)
}

struct BandRaw {
    spec: BandSpec,
    sections: Vec<QuantizedSection>,
    cov_shift: u32,
    whiten_shift: u32,
    cref: FixedMatrix,
}

pub fn decode(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(buf, "model");
    if r.take(4)? != MAGIC {
        return r.fail(0, "bad magic, expected \"MRCM\"");
    }
    let version = r.u16()?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let n_bands = r.u16()? as usize;
    let n = r.u16()? as usize;
    let at = r.offset();
    let n_features = r.u32()? as usize;
    let n_classes = r.u16()? as usize;
    if n == 0 || n_features != n_bands * vect_len(n) {
        return r.fail(at, format!("{n_features} features for {n_bands} bands of {n} channels"));
    }
    if n_classes == 0 {
        return r.fail(at + 4, "zero classes");
    }
    let tri = vect_len(n);

    let n_samples = r.u32()? as usize;
    let fs = r.f64()?;
    let rho = r.f64()?;
    let lambda_min = r.f64()?;
    let input_exponent = r.i8()? as i32;
    let mut bands = Vec::with_capacity(n_bands);
    for _ in 0..n_bands {
        let at = r.offset();
        let (low, high) = (r.f64()?, r.f64()?);
        let spec = BandSpec::new(low, high, fs).or_else(|e| r.fail(at, e.to_string()))?;
        bands.push(BandRaw { spec, sections: Vec::new(), cov_shift: 0, whiten_shift: 0, cref: FixedMatrix::zeros(1, 1, REF_BITS, 0) });
    }

    for b in &mut bands {
        let count = r.u8()? as usize;
        for _ in 0..count {
            let mut coeffs = [0i32; 5];
            for c in &mut coeffs {
                let at = r.offset();
                *c = r.i16()? as i32;
                if !fits(*c as i64, COEFF_BITS) {
                    return r.fail(at, format!("coefficient {c} exceeds {COEFF_BITS} bits"));
                }
            }
            let coeff_exponent = r.i8()? as i32;
            let at = r.offset();
            let output_shift = r.u8()? as u32;
            if output_shift > 62 {
                return r.fail(at, format!("section shift {output_shift}"));
            }
            b.sections.push(QuantizedSection { coeffs, coeff_exponent, output_shift });
        }
    }
    for b in &mut bands {
        let at = r.offset();
        b.cov_shift = r.u8()? as u32;
        b.whiten_shift = r.u8()? as u32;
        if b.cov_shift > 62 || b.whiten_shift > 62 {
            return r.fail(at, "shift above 62");
        }
    }
    for b in &mut bands {
        let mut vals = Vec::with_capacity(tri);
        for _ in 0..tri {
            let at = r.offset();
            let v = r.i16()? as i32;
            if !fits(v as i64, REF_BITS) {
                return r.fail(at, format!("reference value {v} exceeds {REF_BITS} bits"));
            }
            vals.push(v);
        }
        let exponent = r.i8()? as i32;
        b.cref = FixedMatrix::new(n, n, mirrored(n, &vals), REF_BITS, exponent);
    }
    let feature_exponent = r.i8()? as i32;
    let weights: Vec<i8> = r.take(n_classes * n_features)?.iter().map(|&b| b as i8).collect();
    let weight_exponent = r.i8()? as i32;
    let biases = (0..n_classes).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;

    let mut float_sections = Vec::with_capacity(n_bands);
    for b in &bands {
        let mut secs = Vec::with_capacity(b.sections.len());
        for _ in 0..b.sections.len() {
            let c = r.f64s(5)?;
            secs.push(SosSection::from_coefficients([c[0], c[1], c[2], c[3], c[4]]));
        }
        float_sections.push(secs);
    }
    let mut crefs = Vec::with_capacity(n_bands);
    for _ in 0..n_bands {
        crefs.push(Mat::from_vec(n, n, mirrored(n, &r.f64s(tri)?)));
    }
    let wf = r.f64s(n_classes * n_features)?;
    let bf = r.f64s(n_classes)?;
    r.finish()?;

    let bands = bands
        .into_iter()
        .zip(float_sections)
        .zip(crefs)
        .map(|((b, sections), cref_float)| BandModel {
            spec: b.spec,
            sections,
            cascade: QuantizedSosCascade { sections: b.sections, input_exponent },
            cov_shift: b.cov_shift,
            whiten_shift: b.whiten_shift,
            cref: b.cref,
            cref_float,
        })
        .collect();
    Ok(ModelParams {
        bands,
        n_channels: n,
        n_samples,
        sampling_rate_hz: fs,
        rho,
        lambda_min,
        input_exponent,
        feature_exponent,
        svm: SvmParams { n_classes, n_features, weights, weight_exponent, biases },
        svm_float: LinearSvm { n_classes, n_features, weights: wf, biases: bf },
    })
}

pub fn read(path: &Path) -> Result<ModelParams> {
    let buf = fs::read(path).map_err(|e| MrcError::io(path, e))?;
    decode(&buf)
}

pub fn write(path: &Path, model: &ModelParams) -> Result<()> {
    let buf = encode(model)?;
    fs::write(path, buf).map_err(|e| MrcError::io(path, e))
}
