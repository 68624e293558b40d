use std::io;
use std::path::PathBuf;

pub type Result<T, E = MrcError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum MrcError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{what} truncated: needed {needed} bytes at byte offset {offset}")]
    Truncated { what: &'static str, offset: usize, needed: usize },
    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format { what: &'static str, offset: usize, reason: String },
    #[error("{}:{line}: {reason}", path.display())]
    Csv { path: PathBuf, line: u64, reason: String },
    /// `line` 0 marks a `--set` override.
    #[error("{}: {reason}", if *line == 0 { "--set".to_string() } else { format!("config line {line}") })]
    Config { line: usize, reason: String },
    #[error(transparent)]
    Core(#[from] mrc_core::Error),
}

impl MrcError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        MrcError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for I/O and format problems, 3 for data the
    /// pipeline rejects, 64 for bad configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            MrcError::Io { .. } | MrcError::Truncated { .. } | MrcError::Format { .. } | MrcError::Csv { .. } => 2,
            MrcError::Core(_) => 3,
            MrcError::Config { .. } => 64,
        }
    }
}
