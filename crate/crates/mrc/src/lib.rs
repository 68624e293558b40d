//! Dataset and model files, synthetic data, a thread-pool executor and
//! settings for the `mrc` command-line tool.

mod bytes;
pub mod config;
pub mod dataset;
mod error;
pub mod exec;
pub mod model_file;
pub mod synth;

pub use error::{MrcError, Result};
