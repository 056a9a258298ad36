//! Compressed-domain vibration detection and classification for
//! distributed acoustic sensing (DAS).
//!
//! Channel traces are compressed with a fixed random observation matrix,
//! an FIR band-pass bank is projected into the compressed space, and
//! frequency-band energies computed there drive a threshold detector and a
//! one-vs-one SVM. An OMP reconstruction path is kept as the baseline.

pub mod classification;
pub mod datagen;
pub mod error;
pub mod reconstruction;
pub mod rng;
pub mod detection;
pub mod features;
pub mod filterbank;
mod fsutil;
pub mod label;
pub mod pipeline;
pub mod sensing;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
