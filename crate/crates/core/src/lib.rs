//! Physiological drowsiness markers: biosignal preprocessing, per-segment
//! ECG/RESP/EDA features, and clustered logistic models over pooled studies.

pub mod dataset;
pub mod ecg;
pub mod eda;
pub mod error;
pub mod features;
pub mod io;
pub mod pipeline;
pub mod resp;
pub mod signal;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
