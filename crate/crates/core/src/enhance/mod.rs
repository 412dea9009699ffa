//! The causal Transformer spectral-mapping enhancer and the full
//! waveform-to-waveform enhancement pipeline.

mod model;
mod pipeline;
mod train;

pub use model::{build_se_model, SeConfig, SeModel};
pub use pipeline::{
    concat_features, enhance_utterance, AmAeProvider, LatentProvider, PrecomputedLatent,
};
pub use train::{slice_segments, train_se, SePair, SeTrainOpts};

use thiserror::Error;

use crate::dsp::{DspError, FeatureMatrix};
use crate::nnsub::{NnError, Tensor};
use crate::phonetic::PhoneticError;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("config error: {0}")]
    Config(String),
    /// A conditioned model was invoked without a conditioning provider.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Phonetic(#[from] PhoneticError),
}

/// Feature rows as a plain (frames, bins) tensor.
pub fn features_to_tensor(features: &FeatureMatrix) -> Tensor {
    Tensor::new(
        vec![features.num_frames, features.num_bins],
        features.values.clone(),
    )
}
