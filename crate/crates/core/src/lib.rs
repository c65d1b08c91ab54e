//! Camera-based SpO2 estimation: tissue optics, synthetic data,
//! preprocessing, calibration, the VC2S network, and evaluation.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frame;
pub mod fsutil;
mod linalg;
pub mod preprocess;
pub mod series;
pub mod synth;
pub mod tissue;
pub mod vc2s;

pub use error::{Error, Result};
