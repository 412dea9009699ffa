//! Minimal double-precision neural substrate: tensors, reverse-mode
//! autodiff, layers, Adam, finite-difference verification, and checkpoints.

mod adam;
pub mod checkpoint;
mod error;
mod graph;
mod gradcheck;
mod layers;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::NnError;
pub use gradcheck::{grad_check, GradCheckReport, LayerKind, FD_STEP, FD_TOLERANCE};
pub use graph::{Graph, ValueId};
pub use layers::{
    Activation, Conv1dCausal, Dense, LayerNorm, MhsaCausal, DEFAULT_LEAKY_SLOPE, LAYER_NORM_EPS,
};
pub use params::{ParamId, ParamSet, Session};
pub use tensor::Tensor;
