//! Trial datasets: the binary `MRCD` container and a CSV importer.
//!
//! `MRCD` layout, little-endian:
//!
//! ```text
//! "MRCD" | version u16 = 1 | reserved u16 | trials u32 | channels u16
//! | samples u32 | sampling rate f32 | labels u8 x trials (255 = none)
//! | samples f32, trial-major, then channel-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use mrc_core::TrialWindow;

use crate::bytes::{Put, Reader};
use crate::error::{MrcError, Result};

pub const MAGIC: &[u8; 4] = b"MRCD";
pub const VERSION: u16 = 1;
pub const UNLABELED: u8 = 255;
pub const HEADER_LEN: usize = 22;

pub fn encode(trials: &[TrialWindow]) -> Result<Vec<u8>> {
    let (channels, samples, rate) = match trials.first() {
        Some(t) => (t.n_channels(), t.n_samples(), t.sampling_rate_hz),
        None => (0, 0, 0.0),
    };
    if trials.iter().any(|t| (t.n_channels(), t.n_samples(), t.sampling_rate_hz) != (channels, samples, rate)) {
        return Err(mrc_core::Error::Shape("dataset trials differ in shape or sampling rate").into());
    }
    let channels16 = u16::try_from(channels).map_err(|_| mrc_core::Error::Shape("more than 65535 channels"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + trials.len() * (1 + 4 * channels * samples));
    out.extend_from_slice(MAGIC);
    out.put_u16(VERSION);
    out.put_u16(0);
    out.put_u32(trials.len() as u32);
    out.put_u16(channels16);
    out.put_u32(samples as u32);
    out.put_f32(rate as f32);
    for t in trials {
        out.put_u8(t.label.unwrap_or(UNLABELED));
    }
    for t in trials {
        for &x in t.samples() {
            out.put_f32(x);
        }
    }
    Ok(out)
}

pub fn decode(buf: &[u8]) -> Result<Vec<TrialWindow>> {
    let mut r = Reader::new(buf, "dataset");
    if r.take(4)? != MAGIC {
        return r.fail(0, "bad magic, expected \"MRCD\"");
    }
    let version = r.u16()?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    r.u16()?;
    let n_trials = r.u32()? as usize;
    let channels = r.u16()? as usize;
    let samples = r.u32()? as usize;
    let rate = r.f32()? as f64;
    let labels = r.take(n_trials)?.to_vec();
    if n_trials > 0 && (channels == 0 || samples == 0) {
        return r.fail(12, "zero channels or samples");
    }
    let mut trials = Vec::with_capacity(n_trials);
    for &l in &labels {
        let x = r.f32s(channels * samples)?;
        let label = (l != UNLABELED).then_some(l);
        trials.push(TrialWindow::new(channels, samples, x, label, rate)?);
    }
    r.finish()?;
    Ok(trials)
}

pub fn read(path: &Path) -> Result<Vec<TrialWindow>> {
    let buf = fs::read(path).map_err(|e| MrcError::io(path, e))?;
    decode(&buf)
}

pub fn write(path: &Path, trials: &[TrialWindow]) -> Result<()> {
    let buf = encode(trials)?;
    fs::write(path, buf).map_err(|e| MrcError::io(path, e))
}

/// Reads a CSV manifest: `sampling_rate_hz,<hz>` once, then one
/// `path,label` line per trial (empty label or `-` for unlabeled; paths
/// relative to the manifest). Blank lines and `#` comments are skipped.
/// Each trial file has a header row of channel names and one row per
/// sample.
pub fn import_csv(manifest: &Path) -> Result<Vec<TrialWindow>> {
    let text = fs::read_to_string(manifest).map_err(|e| MrcError::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let bad = |line: usize, reason: String| MrcError::Csv { path: manifest.to_path_buf(), line: line as u64, reason };
    let mut rate = None;
    let mut entries: Vec<(PathBuf, Option<u8>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (left, right) = line.split_once(',').ok_or_else(|| bad(i + 1, "expected `path,label`".into()))?;
        let (left, right) = (left.trim(), right.trim());
        if left == "sampling_rate_hz" {
            let hz: f64 = right.parse().map_err(|_| bad(i + 1, format!("bad sampling rate {right:?}")))?;
            rate = Some(hz);
            continue;
        }
        let label = match right {
            "" | "-" => None,
            s => Some(s.parse::<u8>().ok().filter(|&l| l != UNLABELED).ok_or_else(|| bad(i + 1, format!("bad label {s:?}")))?),
        };
        entries.push((base.join(left), label));
    }
    let rate = rate.ok_or_else(|| bad(0, "missing `sampling_rate_hz,<hz>` line".into()))?;
    entries.iter().map(|(path, label)| read_csv_trial(path, *label, rate)).collect()
}

fn read_csv_trial(path: &Path, label: Option<u8>, rate: f64) -> Result<TrialWindow> {
    let bad = |line: u64, reason: String| MrcError::Csv { path: path.to_path_buf(), line, reason };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(0, e.to_string()))?;
    let channels = reader.headers().map_err(|e| bad(1, e.to_string()))?.len();
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        let row = record
            .iter()
            .map(|v| v.parse::<f32>().map_err(|_| bad(line, format!("bad sample {v:?}"))))
            .collect::<Result<Vec<f32>>>()?;
        rows.push(row);
    }
    let samples = rows.len();
    let mut data = vec![0.0f32; channels * samples];
    for (n, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            data[c * samples + n] = v;
        }
    }
    TrialWindow::new(channels, samples, data, label, rate).map_err(|_| bad(0, "empty trial".into()))
}
