//! Frame-level acoustic model: a dense classifier over context-stacked log1p
//! features, trained with per-frame cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{
    gather_rows, EpochStats, Posteriorgram, PosteriorgramSource, PhoneticError, TrainHistory,
    TrainOpts,
};
use crate::bpc::{ConfusionMatrix, PhoneInventory};
use crate::dsp::FeatureMatrix;
use crate::nnsub::{
    checkpoint, Activation, AdamConfig, AdamState, Dense, NnError, ParamSet, Session, Tensor,
    ValueId, DEFAULT_LEAKY_SLOPE,
};

/// Acoustic-model architecture. The paper-scale stack is 7x1024; the desk
/// preset shrinks widths and context so the trend experiments stay fast.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmConfig {
    /// Frames of left/right context concatenated around each frame.
    pub context_frames: usize,
    pub hidden_dims: Vec<usize>,
    pub classes: usize,
    pub feature_dim: usize,
    pub leaky_slope: f64,
}

impl AmConfig {
    pub fn new(classes: usize) -> Self {
        AmConfig {
            context_frames: 5,
            hidden_dims: vec![256, 256],
            classes,
            feature_dim: 257,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn desk(classes: usize) -> Self {
        AmConfig { context_frames: 2, hidden_dims: vec![128, 128], ..AmConfig::new(classes) }
    }

    pub fn input_dim(&self) -> usize {
        (2 * self.context_frames + 1) * self.feature_dim
    }
}

#[derive(Serialize, Deserialize)]
struct AmMeta {
    kind: String,
    config: AmConfig,
    class_names: Vec<String>,
    seed: u64,
}

pub struct AmModel {
    pub cfg: AmConfig,
    pub class_names: Vec<String>,
    pub seed: u64,
    params: ParamSet,
    layers: Vec<Dense>,
}

impl AmModel {
    pub fn build(cfg: AmConfig, class_names: Vec<String>, seed: u64) -> Result<Self, PhoneticError> {
        if class_names.len() != cfg.classes {
            return Err(PhoneticError::Config(format!(
                "{} class names for {} classes",
                class_names.len(),
                cfg.classes
            )));
        }
        if cfg.hidden_dims.iter().any(|&d| d == 0) || cfg.classes == 0 || cfg.feature_dim == 0 {
            return Err(PhoneticError::Config("dimensions must be positive".into()));
        }
        let mut rng = crate::rng::stream_rng(seed, "am-init");
        let mut params = ParamSet::new();
        let mut layers = Vec::new();
        let mut prev = cfg.input_dim();
        for (i, &h) in cfg.hidden_dims.iter().enumerate() {
            layers.push(Dense::new(&mut params, &format!("am.h{i}"), prev, h, &mut rng));
            prev = h;
        }
        layers.push(Dense::new(&mut params, "am.out", prev, cfg.classes, &mut rng));
        Ok(AmModel { cfg, class_names, seed, params, layers })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        let mut h = x;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(s, h)?;
            if i + 1 < n {
                h = Activation::LeakyRelu(self.cfg.leaky_slope).apply(s, h);
            }
        }
        Ok(h)
    }

    /// Raw logits for pre-stacked rows.
    pub fn logits(&self, stacked: &Tensor) -> Result<Tensor, PhoneticError> {
        let mut s = Session::new(&self.params, false);
        let x = s.graph.leaf(stacked.clone(), false);
        let y = self.forward(&mut s, x)?;
        Ok(s.graph.value(y).clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let meta = AmMeta {
            kind: "am".into(),
            config: self.cfg.clone(),
            class_names: self.class_names.clone(),
            seed: self.seed,
        };
        checkpoint::save(path, &serde_json::to_string(&meta).unwrap(), &self.params)
    }

    pub fn load(path: &Path) -> Result<Self, PhoneticError> {
        let (meta_json, loaded) = checkpoint::load(path)?;
        let meta: AmMeta = serde_json::from_str(&meta_json)
            .map_err(|e| PhoneticError::Config(format!("bad AM metadata: {e}")))?;
        if meta.kind != "am" {
            return Err(PhoneticError::Config(format!(
                "checkpoint kind '{}' is not an acoustic model",
                meta.kind
            )));
        }
        let mut model = AmModel::build(meta.config, meta.class_names, meta.seed)?;
        model.params.load_from(&loaded)?;
        Ok(model)
    }
}

/// Context-stacks features with edge replication: row t holds frames
/// t-c..=t+c clamped to the valid range.
pub fn stack_context(features: &FeatureMatrix, context: usize) -> Tensor {
    let (t, f) = (features.num_frames, features.num_bins);
    let width = (2 * context + 1) * f;
    let mut data = Vec::with_capacity(t * width);
    for i in 0..t {
        for off in -(context as isize)..=(context as isize) {
            let src = (i as isize + off).clamp(0, t as isize - 1) as usize;
            data.extend_from_slice(features.frame(src));
        }
    }
    Tensor::new(vec![t, width], data)
}

/// One labeled utterance of noisy features.
#[derive(Clone, Debug)]
pub struct AmTrainItem {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

fn collect_rows(
    items: &[AmTrainItem],
    cfg: &AmConfig,
) -> Result<(Tensor, Vec<usize>), PhoneticError> {
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let width = cfg.input_dim();
    for (i, item) in items.iter().enumerate() {
        if item.labels.len() != item.features.num_frames {
            return Err(PhoneticError::Alignment(format!(
                "utterance {i}: {} labels for {} frames",
                item.labels.len(),
                item.features.num_frames
            )));
        }
        if item.features.num_bins != cfg.feature_dim {
            return Err(PhoneticError::Shape(format!(
                "utterance {i}: {} bins, expected {}",
                item.features.num_bins, cfg.feature_dim
            )));
        }
        if let Some(&bad) = item.labels.iter().find(|&&l| l >= cfg.classes) {
            return Err(PhoneticError::Coverage(format!(
                "utterance {i}: label {bad} out of range for {} classes",
                cfg.classes
            )));
        }
        let stacked = stack_context(&item.features, cfg.context_frames);
        rows.extend_from_slice(stacked.data());
        labels.extend_from_slice(&item.labels);
    }
    let n = labels.len();
    Ok((Tensor::new(vec![n, width], rows), labels))
}

fn dataset_loss(model: &AmModel, rows: &Tensor, labels: &[usize], batch: usize) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = gather_rows(rows, &idx);
        let mut s = Session::new(&model.params, false);
        let xid = s.graph.leaf(x, false);
        let logits = model.forward(&mut s, xid).expect("shapes fixed by construction");
        let loss = s.graph.softmax_cross_entropy(logits, &labels[start..end]);
        total += s.graph.value(loss).scalar_value() * (end - start) as f64;
        start = end;
    }
    total / n.max(1) as f64
}

/// Trains a frame classifier with Adam; early stopping (and best-parameter
/// restore) applies when a validation set is given.
pub fn train_am(
    train: &[AmTrainItem],
    valid: &[AmTrainItem],
    cfg: AmConfig,
    class_names: Vec<String>,
    opts: TrainOpts,
) -> Result<(AmModel, TrainHistory), PhoneticError> {
    let mut model = AmModel::build(cfg, class_names, opts.seed)?;
    let (rows, labels) = collect_rows(train, &model.cfg)?;
    let valid_data = if valid.is_empty() { None } else { Some(collect_rows(valid, &model.cfg)?) };
    if labels.is_empty() {
        return Err(PhoneticError::Config("empty training set".into()));
    }

    let mut adam = AdamState::new(AdamConfig::with_lr(opts.lr), &model.params);
    let mut rng = crate::rng::stream_rng(opts.seed, "am-shuffle");
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut wait = 0usize;

    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let x = gather_rows(&rows, chunk);
            let chunk_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut s = Session::new(&model.params, true);
            let xid = s.graph.leaf(x, false);
            let logits = model.forward(&mut s, xid)?;
            let loss = s.graph.softmax_cross_entropy(logits, &chunk_labels);
            let loss_val = s.graph.value(loss).scalar_value();
            if !loss_val.is_finite() {
                return Err(PhoneticError::Nn(NnError::Numerics(format!(
                    "AM loss {loss_val} at epoch {epoch}"
                ))));
            }
            s.graph.backward(loss)?;
            let grads = s.param_grads();
            adam.step(&mut model.params, &grads);
            epoch_loss += loss_val * chunk.len() as f64;
        }
        let train_loss = epoch_loss / n as f64;

        let valid_loss = valid_data
            .as_ref()
            .map(|(vr, vl)| dataset_loss(&model, vr, vl, opts.batch_size.max(1)));
        history.push(EpochStats { epoch, train_loss, valid_loss });

        if let (Some(vl), Some(patience)) = (valid_loss, opts.patience) {
            let improved = best.as_ref().map(|(b, _)| vl < *b).unwrap_or(true);
            if improved {
                best = Some((vl, model.params.clone()));
                wait = 0;
            } else {
                wait += 1;
                if wait > patience {
                    break;
                }
            }
        }
    }

    if let Some((_, best_params)) = best {
        model.params.load_from(&best_params)?;
    }
    Ok((model, history))
}

/// Per-frame class posteriors with edge-replicated context.
pub fn posteriorgram(
    model: &AmModel,
    features: &FeatureMatrix,
) -> Result<Posteriorgram, PhoneticError> {
    if features.num_bins != model.cfg.feature_dim {
        return Err(PhoneticError::Shape(format!(
            "{} feature bins, model expects {}",
            features.num_bins, model.cfg.feature_dim
        )));
    }
    let stacked = stack_context(features, model.cfg.context_frames);
    let mut s = Session::new(&model.params, false);
    let x = s.graph.leaf(stacked, false);
    let logits = model.forward(&mut s, x)?;
    let probs = s.graph.softmax_rows(logits);
    Posteriorgram::new(
        s.graph.value(probs).clone(),
        model.class_names.clone(),
        PosteriorgramSource::Predicted,
    )
}

/// Labeled utterance tagged with its mixing SNR for per-SNR scoring.
pub struct AmEvalItem {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub snr_db: f64,
}

#[derive(Debug)]
pub struct AmEvaluation {
    /// (snr_db, frame accuracy, frames) ascending by SNR.
    pub per_snr: Vec<(f64, f64, usize)>,
    pub overall_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Frame accuracy per SNR plus the pooled confusion matrix; the confusion
/// feeds the data-driven clustering.
pub fn evaluate_am(model: &AmModel, items: &[AmEvalItem]) -> Result<AmEvaluation, PhoneticError> {
    let inventory = PhoneInventory::new(model.class_names.clone())
        .map_err(|e| PhoneticError::Config(e.to_string()))?;
    let mut confusion = ConfusionMatrix::zeros(inventory);
    let mut groups: Vec<(f64, usize, usize)> = Vec::new(); // (snr, correct, total)

    for item in items {
        if item.labels.len() != item.features.num_frames {
            return Err(PhoneticError::Alignment(format!(
                "{} labels for {} frames",
                item.labels.len(),
                item.features.num_frames
            )));
        }
        let pg = posteriorgram(model, &item.features)?;
        let group = match groups.iter().position(|(s, _, _)| *s == item.snr_db) {
            Some(g) => g,
            None => {
                groups.push((item.snr_db, 0, 0));
                groups.len() - 1
            }
        };
        for (t, &label) in item.labels.iter().enumerate() {
            if label >= model.cfg.classes {
                return Err(PhoneticError::Coverage(format!("label {label} out of range")));
            }
            let pred = pg.argmax(t);
            confusion.add(label, pred, 1);
            groups[group].2 += 1;
            if pred == label {
                groups[group].1 += 1;
            }
        }
    }

    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let per_snr: Vec<(f64, f64, usize)> = groups
        .iter()
        .map(|&(snr, correct, total)| (snr, correct as f64 / total.max(1) as f64, total))
        .collect();
    let overall_accuracy = confusion.trace() as f64 / confusion.total().max(1) as f64;
    Ok(AmEvaluation { per_snr, overall_accuracy, confusion })
}
