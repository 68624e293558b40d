//! `key = value` settings files.

use mrc_core::filterbank::bands_between;
use mrc_core::model::SvmConfig;
use mrc_core::pipeline::TrainConfig;

use crate::error::{MrcError, Result};

/// Training and windowing settings; every field has a config key of the
/// same name.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub band_width_hz: f64,
    pub sampling_rate_hz: f64,
    pub filter_order: usize,
    pub rho: f64,
    pub lambda_min: f64,
    pub window_seconds: f64,
    pub window_offset_seconds: f64,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            band_low_hz: 4.0,
            band_high_hz: 40.0,
            band_width_hz: 2.0,
            sampling_rate_hz: 250.0,
            filter_order: 2,
            rho: 1.0,
            lambda_min: 1e-3,
            window_seconds: 3.5,
            window_offset_seconds: 2.0,
            svm_c: 1.0,
            svm_epochs: 500,
            classes: 4,
            seed: 0,
        }
    }
}

pub const KEYS: [&str; 13] = [
    "band_low_hz",
    "band_high_hz",
    "band_width_hz",
    "sampling_rate_hz",
    "filter_order",
    "rho",
    "lambda_min",
    "window_seconds",
    "window_offset_seconds",
    "svm_c",
    "svm_epochs",
    "classes",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| MrcError::Config { line, reason: format!("bad value {value:?} for {key}") })
}

impl Settings {
    /// Applies one setting; `line` is only used in error messages (0 for
    /// command-line overrides).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "band_low_hz" => self.band_low_hz = parse(key, value, line)?,
            "band_high_hz" => self.band_high_hz = parse(key, value, line)?,
            "band_width_hz" => self.band_width_hz = parse(key, value, line)?,
            "sampling_rate_hz" => self.sampling_rate_hz = parse(key, value, line)?,
            "filter_order" => self.filter_order = parse(key, value, line)?,
            "rho" => self.rho = parse(key, value, line)?,
            "lambda_min" => self.lambda_min = parse(key, value, line)?,
            "window_seconds" => self.window_seconds = parse(key, value, line)?,
            "window_offset_seconds" => self.window_offset_seconds = parse(key, value, line)?,
            "svm_c" => self.svm_c = parse(key, value, line)?,
            "svm_epochs" => self.svm_epochs = parse(key, value, line)?,
            "classes" => self.classes = parse(key, value, line)?,
            "seed" => self.seed = parse(key, value, line)?,
            _ => return Err(MrcError::Config { line, reason: format!("unknown key {key:?}") }),
        }
        Ok(())
    }

    /// Applies a settings file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MrcError::Config { line: i + 1, reason: "expected `key = value`".into() })?;
            self.set(key.trim(), value.trim(), i + 1)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| MrcError::Config { line: 0, reason: format!("override {kv:?} is not `key=value`") })?;
        self.set(key.trim(), value.trim(), 0)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            bands: bands_between(self.band_low_hz, self.band_high_hz, self.band_width_hz, self.sampling_rate_hz),
            filter_order: self.filter_order,
            rho: self.rho,
            lambda_min: self.lambda_min,
            n_classes: self.classes,
            svm: SvmConfig { c: self.svm_c, epochs: self.svm_epochs },
        }
    }
}
