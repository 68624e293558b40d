use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Band edges must satisfy `0 < low < high < fs/2`.
    BandEdges { low_hz: f64, high_hz: f64, sampling_rate_hz: f64 },
    /// A quantized section has a pole on or outside the unit circle.
    UnstableFilter { section: usize },
    /// The tridiagonal QR iteration exceeded its sweep budget.
    QrNoConvergence { band: Option<usize> },
    /// A class is missing from the training labels.
    DegenerateTrainingSet,
    EmptyTrainingSet,
    UnlabeledDataset,
    /// A label is not below the model's class count.
    Label { label: u8, n_classes: usize },
    /// Input dimensions disagree with the model or with each other.
    Shape(&'static str),
}

impl Error {
    /// Attaches a band index to errors raised inside per-band processing.
    pub fn in_band(self, band: usize) -> Self {
        match self {
            Error::QrNoConvergence { band: None } => Error::QrNoConvergence { band: Some(band) },
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BandEdges { low_hz, high_hz, sampling_rate_hz } => write!(
                f,
                "band edges out of range: [{low_hz}, {high_hz}] Hz at {sampling_rate_hz} Hz"
            ),
            Error::UnstableFilter { section } => {
                write!(f, "quantized filter unstable (section {section})")
            }
            Error::QrNoConvergence { band: Some(b) } => {
                write!(f, "QR failed to converge (band {b})")
            }
            Error::QrNoConvergence { band: None } => f.write_str("QR failed to converge"),
            Error::DegenerateTrainingSet => f.write_str("degenerate training set"),
            Error::EmptyTrainingSet => f.write_str("empty training set"),
            Error::UnlabeledDataset => f.write_str("unlabeled dataset"),
            Error::Label { label, n_classes } => {
                write!(f, "label {label} out of range for {n_classes} classes")
            }
            Error::Shape(what) => write!(f, "shape mismatch: {what}"),
        }
    }
}

impl core::error::Error for Error {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn band_index_is_attached_once() {
        let e = Error::QrNoConvergence { band: None }.in_band(3).in_band(5);
        assert_eq!(e, Error::QrNoConvergence { band: Some(3) });
        assert_eq!(e.to_string(), "QR failed to converge (band 3)");
    }
}
