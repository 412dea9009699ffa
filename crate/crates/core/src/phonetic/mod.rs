//! Frame-level acoustic classifiers producing phonetic posteriorgrams, their
//! evaluation, the autoencoder bottleneck compressor, and the ground-truth
//! one-hot pathway.

mod ae;
mod am;

pub use ae::{encode_bppg, train_ae, AeConfig, AeModel};
pub use am::{
    evaluate_am, posteriorgram, stack_context, train_am, AmConfig, AmEvalItem, AmEvaluation,
    AmModel, AmTrainItem,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnsub::{NnError, Tensor};

#[derive(Debug, Error)]
pub enum PhoneticError {
    /// Label track and feature frames disagree in length.
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("shape error: {0}")]
    Shape(String),
    /// Label outside the class inventory.
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Where a posteriorgram came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorgramSource {
    Predicted,
    OneHotGroundTruth,
}

/// T x C row-stochastic class posteriors.
#[derive(Clone, Debug)]
pub struct Posteriorgram {
    values: Tensor,
    class_names: Vec<String>,
    source: PosteriorgramSource,
}

impl Posteriorgram {
    /// Validates row-stochasticity (each row sums to 1 within 1e-6).
    pub fn new(
        values: Tensor,
        class_names: Vec<String>,
        source: PosteriorgramSource,
    ) -> Result<Self, PhoneticError> {
        if values.rank() != 2 || values.dim1() != class_names.len() {
            return Err(PhoneticError::Shape(format!(
                "posteriorgram shape {:?} vs {} classes",
                values.shape(),
                class_names.len()
            )));
        }
        for t in 0..values.dim0() {
            let row = values.row(t);
            if row.iter().any(|&v| v < 0.0) {
                return Err(PhoneticError::Shape(format!("negative posterior at frame {t}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(PhoneticError::Shape(format!(
                    "frame {t} posteriors sum to {sum}"
                )));
            }
        }
        Ok(Posteriorgram { values, class_names, source })
    }

    pub fn num_frames(&self) -> usize {
        self.values.dim0()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn source(&self) -> PosteriorgramSource {
        self.source
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    /// Most probable class per frame.
    pub fn argmax(&self, t: usize) -> usize {
        let row = self.row(t);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Exact one-hot posteriors from ground-truth labels.
pub fn one_hot_posteriorgram(
    labels: &[usize],
    class_names: &[String],
) -> Result<Posteriorgram, PhoneticError> {
    let c = class_names.len();
    let mut values = Tensor::zeros(vec![labels.len(), c]);
    for (t, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(PhoneticError::Coverage(format!(
                "label {l} at frame {t} out of range for {c} classes"
            )));
        }
        values.set2(t, l, 1.0);
    }
    Posteriorgram::new(values, class_names.to_vec(), PosteriorgramSource::OneHotGroundTruth)
}

/// Per-epoch losses recorded by the training loops.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn push(&mut self, stats: EpochStats) {
        self.epochs.push(stats);
    }

    pub fn last_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// CSV: epoch,train_loss,valid_loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss\n");
        for e in &self.epochs {
            match e.valid_loss {
                Some(v) => out.push_str(&format!("{},{:.8},{:.8}\n", e.epoch, e.train_loss, v)),
                None => out.push_str(&format!("{},{:.8},\n", e.epoch, e.train_loss)),
            }
        }
        out
    }
}

/// Common knobs for the desk-scale training loops.
#[derive(Clone, Copy, Debug)]
pub struct TrainOpts {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Early-stopping patience on validation loss, when a validation set is
    /// supplied.
    pub patience: Option<usize>,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts { epochs: 20, lr: 1e-3, batch_size: 256, seed: 0, patience: Some(5) }
    }
}

pub(crate) fn gather_rows(matrix: &Tensor, idx: &[usize]) -> Tensor {
    let cols = matrix.dim1();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(matrix.row(i));
    }
    Tensor::new(vec![idx.len(), cols], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn one_hot_rows_are_exact() {
        let pg = one_hot_posteriorgram(&[2, 0, 4], &names(5)).unwrap();
        assert_eq!(pg.row(0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(pg.row(1), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(pg.row(2), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(pg.source(), PosteriorgramSource::OneHotGroundTruth);
        for t in 0..3 {
            assert_eq!(pg.row(t).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn out_of_range_label_is_coverage_error() {
        assert!(matches!(
            one_hot_posteriorgram(&[5], &names(5)),
            Err(PhoneticError::Coverage(_))
        ));
    }

    #[test]
    fn non_stochastic_rows_are_rejected() {
        let t = Tensor::new(vec![1, 2], vec![0.7, 0.7]);
        assert!(Posteriorgram::new(t, names(2), PosteriorgramSource::Predicted).is_err());
    }
}
