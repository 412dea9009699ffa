//! Objective evaluation: STOI, SNR measurement, and report aggregation.

mod report;
mod snr;
mod stoi;

pub use report::{aggregate, EvalReport, ScoreRecord};
pub use snr::measure_snr;
pub use stoi::{stoi, StoiConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// Signal too short for one analysis segment after silence removal.
    #[error("signal too short for analysis: {0}")]
    TooShort(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
