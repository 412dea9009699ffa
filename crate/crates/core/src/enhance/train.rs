//! Enhancer training: 64-frame segments, MAE against clean features, Adam,
//! early stopping on validation loss.
//!
//! Batch gradients are computed per segment in parallel and summed in
//! segment order, so training is bit-reproducible at any thread count.

use rand::seq::SliceRandom;

use super::model::SeModel;
use super::EnhanceError;
use crate::nnsub::{AdamConfig, AdamState, NnError, Session, Tensor};
use crate::phonetic::{EpochStats, TrainHistory};
use crate::threads;

/// One frame-aligned (noisy-input, clean-target) utterance pair. The input
/// may carry conditioning latents appended to the noisy features.
#[derive(Clone, Debug)]
pub struct SePair {
    pub input: Tensor,
    pub target: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct SeTrainOpts {
    pub epochs: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay. MAE gradients are
    /// sign-like, so Adam oscillates at a floor proportional to the step
    /// size unless the rate shrinks.
    pub lr_decay: f64,
    /// Epochs of mean-squared-error warmup before the MAE objective. log1p
    /// targets are mostly zero, so cold-starting on MAE collapses the ReLU
    /// head onto the all-zero output; the warmup establishes the denoising
    /// map first.
    pub mse_warmup_epochs: usize,
    /// Segments per optimizer step.
    pub batch_segments: usize,
    pub seed: u64,
    pub patience: Option<usize>,
    /// Hop between training segments; `None` means non-overlapping.
    pub segment_hop: Option<usize>,
}

impl Default for SeTrainOpts {
    fn default() -> Self {
        SeTrainOpts {
            epochs: 15,
            lr: 1e-3,
            lr_decay: 0.95,
            mse_warmup_epochs: 4,
            batch_segments: 8,
            seed: 0,
            patience: Some(5),
            segment_hop: None,
        }
    }
}

/// Slices utterance pairs into fixed-length training segments. Utterances
/// shorter than one segment contribute themselves whole.
pub fn slice_segments(pairs: &[SePair], segment_frames: usize, hop: usize) -> Vec<SePair> {
    let mut out = Vec::new();
    for pair in pairs {
        let t = pair.input.dim0();
        if t == 0 {
            continue;
        }
        if t < segment_frames {
            out.push(pair.clone());
            continue;
        }
        let mut start = 0;
        while start + segment_frames <= t {
            out.push(SePair {
                input: rows_slice(&pair.input, start, segment_frames),
                target: rows_slice(&pair.target, start, segment_frames),
            });
            start += hop;
        }
    }
    out
}

fn rows_slice(t: &Tensor, start: usize, len: usize) -> Tensor {
    let cols = t.dim1();
    Tensor::new(vec![len, cols], t.data()[start * cols..(start + len) * cols].to_vec())
}

fn segment_loss_and_grads(
    model: &SeModel,
    seg: &SePair,
    use_mse: bool,
) -> Result<(f64, Vec<Tensor>), EnhanceError> {
    let mut s = Session::new(model.params(), true);
    let x = s.graph.leaf(seg.input.clone(), false);
    let target = s.graph.leaf(seg.target.clone(), false);
    let y = model.forward(&mut s, x)?;
    let loss = if use_mse { s.graph.mse(y, target) } else { s.graph.mae(y, target) };
    let loss_val = s.graph.value(loss).scalar_value();
    s.graph.backward(loss)?;
    Ok((loss_val, s.param_grads()))
}

fn segment_loss(model: &SeModel, seg: &SePair) -> Result<f64, EnhanceError> {
    let mut s = Session::new(model.params(), false);
    let x = s.graph.leaf(seg.input.clone(), false);
    let target = s.graph.leaf(seg.target.clone(), false);
    let y = model.forward(&mut s, x)?;
    let loss = s.graph.mae(y, target);
    Ok(s.graph.value(loss).scalar_value())
}

fn mean_loss(model: &SeModel, segments: &[SePair]) -> Result<f64, EnhanceError> {
    if segments.is_empty() {
        return Ok(0.0);
    }
    let losses = threads::ordered_map(segments, |seg| segment_loss(model, seg));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / segments.len() as f64)
}

/// Trains in place and returns the per-epoch history. Validation pairs (when
/// non-empty) drive early stopping with best-parameter restore.
pub fn train_se(
    model: &mut SeModel,
    train_pairs: &[SePair],
    valid_pairs: &[SePair],
    opts: SeTrainOpts,
) -> Result<TrainHistory, EnhanceError> {
    for pair in train_pairs.iter().chain(valid_pairs) {
        if pair.input.dim0() != pair.target.dim0() {
            return Err(EnhanceError::Shape(format!(
                "noisy/clean frame mismatch: {} vs {}",
                pair.input.dim0(),
                pair.target.dim0()
            )));
        }
        if pair.input.dim1() != model.input_dim() || pair.target.dim1() != model.cfg.feature_dim {
            return Err(EnhanceError::Shape(format!(
                "pair widths ({}, {}) vs model ({}, {})",
                pair.input.dim1(),
                pair.target.dim1(),
                model.input_dim(),
                model.cfg.feature_dim
            )));
        }
    }

    let seg_len = model.cfg.segment_frames;
    let hop = opts.segment_hop.unwrap_or(seg_len).max(1);
    let segments = slice_segments(train_pairs, seg_len, hop);
    if segments.is_empty() {
        return Err(EnhanceError::Config("empty training set".into()));
    }
    let valid_segments = slice_segments(valid_pairs, seg_len, hop);

    let mut adam = AdamState::new(AdamConfig::with_lr(opts.lr), model.params());
    let mut rng = crate::rng::stream_rng(opts.seed, "se-shuffle");
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, crate::nnsub::ParamSet)> = None;
    let mut wait = 0usize;

    let mut order: Vec<usize> = (0..segments.len()).collect();
    for epoch in 0..opts.epochs {
        adam.cfg.lr = opts.lr * opts.lr_decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_segments.max(1)) {
            let use_mse = epoch < opts.mse_warmup_epochs;
            let results =
                threads::ordered_map(chunk, |&i| segment_loss_and_grads(model, &segments[i], use_mse));
            let mut batch_loss = 0.0;
            let mut summed: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                match &mut summed {
                    None => summed = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                *av += gv;
                            }
                        }
                    }
                }
            }
            let mut grads = summed.expect("nonempty chunk");
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(EnhanceError::Nn(NnError::Numerics(format!(
                    "SE loss {batch_loss} at epoch {epoch}: inputs or learning rate are blowing up"
                ))));
            }
            adam.step(model.params_mut(), &grads);
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / segments.len() as f64;

        let valid_loss = if valid_segments.is_empty() {
            None
        } else {
            Some(mean_loss(model, &valid_segments)?)
        };
        history.push(EpochStats { epoch, train_loss, valid_loss });

        // early stopping tracks the MAE objective, after any warmup epochs
        if let (Some(vl), Some(patience)) = (valid_loss, opts.patience) {
            if epoch >= opts.mse_warmup_epochs {
                let improved = best.as_ref().map(|(b, _)| vl < *b).unwrap_or(true);
                if improved {
                    best = Some((vl, model.params().clone()));
                    wait = 0;
                } else {
                    wait += 1;
                    if wait > patience {
                        break;
                    }
                }
            }
        }
    }

    if let Some((_, best_params)) = best {
        model.params_mut().load_from(&best_params)?;
    }
    Ok(history)
}
