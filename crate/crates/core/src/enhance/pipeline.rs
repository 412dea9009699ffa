//! Waveform-to-waveform enhancement: STFT, log1p features, optional
//! conditioning latents, causal model forward over the full utterance, then
//! resynthesis with the noisy phase.

use super::model::SeModel;
use super::{features_to_tensor, EnhanceError};
use crate::dsp::{defeaturize, featurize, istft, stft, FeatureMatrix, StftParams, Waveform};
use crate::nnsub::Tensor;
use crate::phonetic::{encode_bppg, posteriorgram, AeModel, AmModel};

/// Produces per-frame conditioning latents for a noisy utterance.
pub trait LatentProvider {
    fn latent(&self, features: &FeatureMatrix) -> Result<Tensor, EnhanceError>;
}

/// Acoustic model posteriors compressed through the autoencoder bottleneck.
pub struct AmAeProvider<'a> {
    pub am: &'a AmModel,
    pub ae: &'a AeModel,
}

impl LatentProvider for AmAeProvider<'_> {
    fn latent(&self, features: &FeatureMatrix) -> Result<Tensor, EnhanceError> {
        let pg = posteriorgram(self.am, features)?;
        Ok(encode_bppg(self.ae, &pg)?)
    }
}

/// A precomputed latent track, e.g. ground-truth one-hot labels pushed
/// through the autoencoder.
pub struct PrecomputedLatent(pub Tensor);

impl LatentProvider for PrecomputedLatent {
    fn latent(&self, features: &FeatureMatrix) -> Result<Tensor, EnhanceError> {
        if self.0.dim0() != features.num_frames {
            return Err(EnhanceError::Shape(format!(
                "latent has {} frames, features have {}",
                self.0.dim0(),
                features.num_frames
            )));
        }
        Ok(self.0.clone())
    }
}

/// Enhances one utterance. Conditioned models need a latent provider;
/// output length always equals input length.
pub fn enhance_utterance(
    model: &SeModel,
    noisy: &Waveform,
    provider: Option<&dyn LatentProvider>,
) -> Result<Waveform, EnhanceError> {
    let spec = stft(noisy, StftParams::default())?;
    if spec.num_bins != model.cfg.feature_dim {
        return Err(EnhanceError::Shape(format!(
            "{} spectral bins, model expects {}",
            spec.num_bins, model.cfg.feature_dim
        )));
    }
    let (features, phase) = featurize(&spec);

    let input = if model.conditioned {
        let provider = provider.ok_or_else(|| {
            EnhanceError::Usage("conditioned model needs a conditioning provider".into())
        })?;
        let latent = provider.latent(&features)?;
        if latent.dim0() != features.num_frames || latent.dim1() != model.cfg.cond_dim {
            return Err(EnhanceError::Shape(format!(
                "latent shape {:?}, expected ({}, {})",
                latent.shape(),
                features.num_frames,
                model.cfg.cond_dim
            )));
        }
        concat_features(&features, &latent)
    } else {
        features_to_tensor(&features)
    };

    let enhanced = model.infer(&input)?;
    let enhanced_features = FeatureMatrix {
        values: enhanced.data().to_vec(),
        num_frames: features.num_frames,
        num_bins: features.num_bins,
        params: features.params,
    };
    let out_spec = defeaturize(&enhanced_features, &phase, spec.original_len, spec.sample_rate_hz)?;
    Ok(istft(&out_spec))
}

/// Noisy features with conditioning latents appended per frame.
pub fn concat_features(features: &FeatureMatrix, latent: &Tensor) -> Tensor {
    let (t, f) = (features.num_frames, features.num_bins);
    let cond = latent.dim1();
    let mut data = Vec::with_capacity(t * (f + cond));
    for i in 0..t {
        data.extend_from_slice(features.frame(i));
        data.extend_from_slice(latent.row(i));
    }
    Tensor::new(vec![t, f + cond], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::model::{build_se_model, SeConfig};

    fn desk_ish_cfg() -> SeConfig {
        SeConfig {
            conv_channels: vec![16, 8],
            conv_kernel: 3,
            n_blocks: 1,
            heads: 2,
            head_dim: 4,
            ff_hidden: 8,
            feature_dim: 257,
            cond_dim: 96,
            segment_frames: 16,
            leaky_slope: 0.01,
        }
    }

    fn noisy_wave(n: usize, seed: u64) -> Waveform {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, "pipeline-test");
        Waveform::new((0..n).map(|_| rng.random_range(-0.3..0.3)).collect(), 16000)
    }

    #[test]
    fn output_length_equals_input_length() {
        let model = build_se_model(desk_ish_cfg(), false, 1).unwrap();
        for n in [4000usize, 5123, 16000] {
            let w = noisy_wave(n, n as u64);
            let out = enhance_utterance(&model, &w, None).unwrap();
            assert_eq!(out.len(), n);
            assert_eq!(out.sample_rate_hz, 16000);
        }
    }

    #[test]
    fn conditioned_model_without_provider_is_usage_error() {
        let model = build_se_model(desk_ish_cfg(), true, 2).unwrap();
        let w = noisy_wave(4000, 3);
        assert!(matches!(
            enhance_utterance(&model, &w, None),
            Err(EnhanceError::Usage(_))
        ));
    }

    #[test]
    fn precomputed_latent_path_works() {
        let model = build_se_model(desk_ish_cfg(), true, 4).unwrap();
        let w = noisy_wave(4000, 5);
        let spec = stft(&w, StftParams::default()).unwrap();
        let frames = spec.num_frames;
        let latent = PrecomputedLatent(Tensor::filled(vec![frames, 96], 0.5));
        let out = enhance_utterance(&model, &w, Some(&latent)).unwrap();
        assert_eq!(out.len(), w.len());

        // wrong frame count is rejected
        let bad = PrecomputedLatent(Tensor::filled(vec![frames + 1, 96], 0.5));
        assert!(matches!(
            enhance_utterance(&model, &w, Some(&bad)),
            Err(EnhanceError::Shape(_))
        ));
    }

    #[test]
    fn enhancement_is_causal_at_waveform_level() {
        // identical prefixes in, identical prefixes out (up to one window of
        // frame-boundary slack)
        let model = build_se_model(desk_ish_cfg(), false, 6).unwrap();
        let a = noisy_wave(8000, 7);
        let mut b = a.clone();
        let split = 6000usize;
        for i in split..8000 {
            b.samples[i] = -b.samples[i] * 0.5 + 0.01;
        }
        let ya = enhance_utterance(&model, &a, None).unwrap();
        let yb = enhance_utterance(&model, &b, None).unwrap();
        let params = StftParams::default();
        // frames fully inside [0, split) are bit-identical through the model;
        // resynthesis mixes in one window of slack
        let safe = split - params.window_len;
        for i in 0..safe {
            assert_eq!(ya.samples[i], yb.samples[i], "sample {i}");
        }
    }
}
