//! The causal Transformer enhancer.
//!
//! A stack of causal 1-D convolutions encodes the input (replacing positional
//! encoding), a learned per-frame projection bridges the last conv width to
//! the attention width, N post-norm attention blocks follow (causal MHSA and
//! a two-layer feed-forward, each with residual and layer normalization), and
//! a fully-connected head with ReLU maps back to the 257 frequency bins.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::EnhanceError;
use crate::nnsub::{
    checkpoint, Activation, Conv1dCausal, Dense, LayerNorm, MhsaCausal, NnError, ParamSet,
    Session, Tensor, ValueId, DEFAULT_LEAKY_SLOPE,
};

/// Enhancer architecture. `paper()` is the full-size configuration;
/// `desk()` is the reduced preset the trend experiments run on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeConfig {
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub n_blocks: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ff_hidden: usize,
    pub feature_dim: usize,
    pub cond_dim: usize,
    pub segment_frames: usize,
    pub leaky_slope: f64,
}

impl SeConfig {
    pub fn paper() -> Self {
        SeConfig {
            conv_channels: vec![1024, 512, 256, 128],
            conv_kernel: 3,
            n_blocks: 8,
            heads: 8,
            head_dim: 64,
            ff_hidden: 512,
            feature_dim: 257,
            cond_dim: 96,
            segment_frames: 64,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn desk() -> Self {
        SeConfig {
            conv_channels: vec![128, 96, 64, 64],
            conv_kernel: 3,
            n_blocks: 4,
            heads: 4,
            head_dim: 32,
            ff_hidden: 128,
            feature_dim: 257,
            cond_dim: 96,
            segment_frames: 64,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.conv_channels.is_empty() || self.conv_channels.iter().any(|&c| c == 0) {
            return Err(EnhanceError::Config("conv channels must be nonempty and positive".into()));
        }
        if self.conv_kernel == 0
            || self.heads == 0
            || self.head_dim == 0
            || self.ff_hidden == 0
            || self.feature_dim == 0
            || self.segment_frames == 0
        {
            return Err(EnhanceError::Config("dimensions must be positive".into()));
        }
        Ok(())
    }
}

struct SeBlock {
    attn: MhsaCausal,
    ln1: LayerNorm,
    ff1: Dense,
    ff2: Dense,
    ln2: LayerNorm,
}

#[derive(Serialize, Deserialize)]
struct SeMeta {
    kind: String,
    config: SeConfig,
    conditioned: bool,
    seed: u64,
}

pub struct SeModel {
    pub cfg: SeConfig,
    pub conditioned: bool,
    pub seed: u64,
    params: ParamSet,
    convs: Vec<Conv1dCausal>,
    bridge: Dense,
    blocks: Vec<SeBlock>,
    head: Dense,
}

/// Builds a seeded enhancer. Conditioned models take 257+96 input channels,
/// unconditioned 257.
pub fn build_se_model(cfg: SeConfig, conditioned: bool, seed: u64) -> Result<SeModel, EnhanceError> {
    cfg.validate()?;
    let mut rng = crate::rng::stream_rng(seed, "se-init");
    let mut params = ParamSet::new();

    let mut convs = Vec::new();
    let mut prev = cfg.feature_dim + if conditioned { cfg.cond_dim } else { 0 };
    for (i, &ch) in cfg.conv_channels.iter().enumerate() {
        convs.push(Conv1dCausal::new(&mut params, &format!("conv{i}"), cfg.conv_kernel, prev, ch, &mut rng));
        prev = ch;
    }
    let model_dim = cfg.model_dim();
    let bridge = Dense::new(&mut params, "bridge", prev, model_dim, &mut rng);

    let mut blocks = Vec::new();
    for b in 0..cfg.n_blocks {
        let block = SeBlock {
            attn: MhsaCausal::new(&mut params, &format!("blk{b}.attn"), cfg.heads, cfg.head_dim, &mut rng),
            ln1: LayerNorm::new(&mut params, &format!("blk{b}.ln1"), model_dim),
            ff1: Dense::new(&mut params, &format!("blk{b}.ff1"), model_dim, cfg.ff_hidden, &mut rng),
            ff2: Dense::new(&mut params, &format!("blk{b}.ff2"), cfg.ff_hidden, model_dim, &mut rng),
            ln2: LayerNorm::new(&mut params, &format!("blk{b}.ln2"), model_dim),
        };
        // zero the sublayer output projections so each post-norm block starts
        // as a per-frame normalization of its input; randomly initialized
        // blocks smear the sequence and training stalls at the target mean
        *params.get_mut(block.attn.wo.w) = Tensor::zeros(vec![model_dim, model_dim]);
        *params.get_mut(block.ff2.w) = Tensor::zeros(vec![cfg.ff_hidden, model_dim]);
        blocks.push(block);
    }
    let head = Dense::new(&mut params, "head", model_dim, cfg.feature_dim, &mut rng);
    // start the ReLU head alive: with a zero bias most units begin clamped
    // and MAE training collapses onto the all-zero output
    *params.get_mut(head.b) = Tensor::filled(vec![cfg.feature_dim], 0.25);

    Ok(SeModel { cfg, conditioned, seed, params, convs, bridge, blocks, head })
}

impl SeModel {
    pub fn input_dim(&self) -> usize {
        self.cfg.feature_dim + if self.conditioned { self.cfg.cond_dim } else { 0 }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Replaces the parameters with same-named, same-shaped tensors.
    pub fn load_params(&mut self, params: &ParamSet) -> Result<(), NnError> {
        self.params.load_from(params)
    }

    /// Wires the enhancer into a caller-owned session, e.g. to attach a loss.
    ///
    /// Blocks are pre-norm: the residual stream runs unnormalized from the
    /// conv encoder to the head, with layer normalization inside each
    /// sublayer. Normalizing the stream itself (post-norm) divides the frame
    /// energy out of the only path to the output and spectral-map training
    /// stalls at the target mean.
    pub fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        let leaky = Activation::LeakyRelu(self.cfg.leaky_slope);
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(s, h)?;
            h = leaky.apply(s, h);
        }
        h = self.bridge.forward(s, h)?;
        for block in &self.blocks {
            let normed = block.ln1.forward(s, h)?;
            let attn = block.attn.forward(s, normed)?;
            h = s.graph.add(h, attn);
            let normed = block.ln2.forward(s, h)?;
            let f = block.ff1.forward(s, normed)?;
            let f = leaky.apply(s, f);
            let f = block.ff2.forward(s, f)?;
            h = s.graph.add(h, f);
        }
        let y = self.head.forward(s, h)?;
        let y = s.graph.relu(y);
        s.graph.numerics_ok()?;
        Ok(y)
    }

    /// Full-utterance causal inference: (frames, input_dim) in,
    /// (frames, feature_dim) nonnegative log1p features out.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, EnhanceError> {
        if input.rank() != 2 || input.dim1() != self.input_dim() {
            return Err(EnhanceError::Shape(format!(
                "input shape {:?}, expected (frames, {})",
                input.shape(),
                self.input_dim()
            )));
        }
        let mut s = Session::new(&self.params, false);
        let x = s.graph.leaf(input.clone(), false);
        let y = self.forward(&mut s, x)?;
        Ok(s.graph.value(y).clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let meta = SeMeta {
            kind: "se".into(),
            config: self.cfg.clone(),
            conditioned: self.conditioned,
            seed: self.seed,
        };
        checkpoint::save(path, &serde_json::to_string(&meta).unwrap(), &self.params)
    }

    /// Raw checkpoint bytes (used by the byte-identity determinism checks).
    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let meta = SeMeta {
            kind: "se".into(),
            config: self.cfg.clone(),
            conditioned: self.conditioned,
            seed: self.seed,
        };
        checkpoint::encode(&serde_json::to_string(&meta).unwrap(), &self.params)
    }

    pub fn load(path: &Path) -> Result<Self, EnhanceError> {
        let (meta_json, loaded) = checkpoint::load(path)?;
        let meta: SeMeta = serde_json::from_str(&meta_json)
            .map_err(|e| EnhanceError::Config(format!("bad SE metadata: {e}")))?;
        if meta.kind != "se" {
            return Err(EnhanceError::Config(format!(
                "checkpoint kind '{}' is not an enhancer",
                meta.kind
            )));
        }
        let mut model = build_se_model(meta.config, meta.conditioned, meta.seed)?;
        model.params.load_from(&loaded)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SeConfig {
        SeConfig {
            conv_channels: vec![16, 8],
            conv_kernel: 3,
            n_blocks: 2,
            heads: 2,
            head_dim: 4,
            ff_hidden: 16,
            feature_dim: 12,
            cond_dim: 5,
            segment_frames: 8,
            leaky_slope: 0.01,
        }
    }

    #[test]
    fn input_width_tracks_conditioning() {
        let base = build_se_model(tiny_cfg(), false, 1).unwrap();
        assert_eq!(base.input_dim(), 12);
        assert_eq!(base.convs[0].in_ch, 12);
        let cond = build_se_model(tiny_cfg(), true, 1).unwrap();
        assert_eq!(cond.input_dim(), 17);
        assert_eq!(cond.convs[0].in_ch, 17);
    }

    #[test]
    fn default_configs_match_published_widths() {
        let paper = SeConfig::paper();
        assert_eq!(paper.conv_channels, vec![1024, 512, 256, 128]);
        assert_eq!(paper.model_dim(), 512);
        assert_eq!(paper.n_blocks, 8);
        assert_eq!(paper.feature_dim + paper.cond_dim, 353);
        let desk = SeConfig::desk();
        assert_eq!(desk.feature_dim, 257);
        assert_eq!(desk.cond_dim, 96);
        assert_eq!(desk.segment_frames, 64);
    }

    #[test]
    fn same_seed_builds_identical_checkpoints() {
        let a = build_se_model(tiny_cfg(), true, 42).unwrap();
        let b = build_se_model(tiny_cfg(), true, 42).unwrap();
        assert_eq!(a.encode_checkpoint(), b.encode_checkpoint());
        let c = build_se_model(tiny_cfg(), true, 43).unwrap();
        assert_ne!(a.encode_checkpoint(), c.encode_checkpoint());
    }

    #[test]
    fn outputs_are_nonnegative() {
        let model = build_se_model(tiny_cfg(), false, 3).unwrap();
        let mut rng = crate::rng::stream_rng(3, "se-test");
        let x = Tensor::uniform(vec![10, 12], 1.0, &mut rng);
        let y = model.infer(&x).unwrap();
        assert_eq!(y.shape(), &[10, 12]);
        assert!(y.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn model_is_causal_bitwise() {
        let model = build_se_model(tiny_cfg(), false, 4).unwrap();
        let mut rng = crate::rng::stream_rng(4, "se-test");
        let x = Tensor::uniform(vec![12, 12], 1.0, &mut rng);
        for cut in [3usize, 7, 10] {
            let mut zeroed = x.clone();
            for t in cut..12 {
                for j in 0..12 {
                    zeroed.set2(t, j, 0.0);
                }
            }
            let y1 = model.infer(&x).unwrap();
            let y2 = model.infer(&zeroed).unwrap();
            for t in 0..cut {
                assert_eq!(y1.row(t), y2.row(t), "cut {cut}, frame {t}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = build_se_model(tiny_cfg(), true, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("se.bpse");
        model.save(&path).unwrap();
        let back = SeModel::load(&path).unwrap();
        assert_eq!(model.encode_checkpoint(), back.encode_checkpoint());
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let model = build_se_model(tiny_cfg(), false, 6).unwrap();
        let x = Tensor::zeros(vec![4, 13]);
        assert!(matches!(model.infer(&x), Err(EnhanceError::Shape(_))));
    }
}
