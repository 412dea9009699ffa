//! Central finite-difference verification of every layer's gradients.
//!
//! For each trial a layer is built with random small shapes, a scalar probe
//! loss is formed (sum of the output weighted by a fixed random tensor, or
//! the MAE head directly), and every parameter and input element is compared
//! against (f(x+h) - f(x-h)) / 2h in double precision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::error::NnError;
use super::graph::ValueId;
use super::layers::{Activation, Conv1dCausal, Dense, LayerNorm, MhsaCausal, DEFAULT_LEAKY_SLOPE};
use super::params::{ParamId, ParamSet, Session};
use super::tensor::Tensor;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the worst relative error.
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv1dCausal,
    LayerNorm,
    MhsaCausal,
    Relu,
    LeakyRelu,
    Sigmoid,
    MaeHead,
}

impl LayerKind {
    pub fn all() -> [LayerKind; 8] {
        [
            LayerKind::Dense,
            LayerKind::Conv1dCausal,
            LayerKind::LayerNorm,
            LayerKind::MhsaCausal,
            LayerKind::Relu,
            LayerKind::LeakyRelu,
            LayerKind::Sigmoid,
            LayerKind::MaeHead,
        ]
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv1dCausal => "conv1d_causal",
            LayerKind::LayerNorm => "layernorm",
            LayerKind::MhsaCausal => "mhsa_causal",
            LayerKind::Relu => "relu",
            LayerKind::LeakyRelu => "leaky_relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::MaeHead => "mae_head",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub kind: LayerKind,
    pub trials: usize,
    pub values_checked: usize,
    pub worst_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_rel_err < FD_TOLERANCE
    }
}

enum Built {
    Dense(Dense),
    Conv(Conv1dCausal),
    Ln(LayerNorm),
    Mhsa(MhsaCausal),
    Act(Activation),
    MaeHead,
}

impl Built {
    fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        match self {
            Built::Dense(l) => l.forward(s, x),
            Built::Conv(l) => l.forward(s, x),
            Built::Ln(l) => l.forward(s, x),
            Built::Mhsa(l) => l.forward(s, x),
            Built::Act(a) => Ok(a.apply(s, x)),
            Built::MaeHead => Ok(x),
        }
    }
}

struct TrialSetup {
    built: Built,
    params: ParamSet,
    input: Tensor,
    probe: Tensor,
    target: Option<Tensor>,
}

/// Uniform values bounded away from zero, for kinked ops.
fn away_from_zero(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.random_range(0.1..1.0)
        })
        .collect();
    Tensor::new(shape, data)
}

fn build_trial(kind: LayerKind, rng: &mut ChaCha8Rng) -> TrialSetup {
    let mut params = ParamSet::new();
    let t = rng.random_range(2..6usize);
    match kind {
        LayerKind::Dense => {
            let (din, dout) = (rng.random_range(2..5usize), rng.random_range(2..5usize));
            let layer = Dense::new(&mut params, "l", din, dout, rng);
            TrialSetup {
                built: Built::Dense(layer),
                input: Tensor::uniform(vec![t, din], 1.0, rng),
                probe: Tensor::uniform(vec![t, dout], 1.0, rng),
                params,
                target: None,
            }
        }
        LayerKind::Conv1dCausal => {
            let k = rng.random_range(2..5usize);
            let (cin, cout) = (rng.random_range(1..4usize), rng.random_range(1..4usize));
            let layer = Conv1dCausal::new(&mut params, "l", k, cin, cout, rng);
            TrialSetup {
                built: Built::Conv(layer),
                input: Tensor::uniform(vec![t + 2, cin], 1.0, rng),
                probe: Tensor::uniform(vec![t + 2, cout], 1.0, rng),
                params,
                target: None,
            }
        }
        LayerKind::LayerNorm => {
            let d = rng.random_range(3..8usize);
            let mut layer = LayerNorm::new(&mut params, "l", d);
            // exercise non-trivial gain/bias, not just the init values
            *params.get_mut(layer.gain) = Tensor::uniform(vec![d], 1.0, rng);
            *params.get_mut(layer.bias) = Tensor::uniform(vec![d], 0.5, rng);
            layer.dim = d;
            TrialSetup {
                built: Built::Ln(layer),
                input: Tensor::uniform(vec![t, d], 1.0, rng),
                probe: Tensor::uniform(vec![t, d], 1.0, rng),
                params,
                target: None,
            }
        }
        LayerKind::MhsaCausal => {
            let heads = rng.random_range(1..3usize);
            let hd = rng.random_range(2..4usize);
            let layer = MhsaCausal::new(&mut params, "l", heads, hd, rng);
            let model = heads * hd;
            TrialSetup {
                built: Built::Mhsa(layer),
                input: Tensor::uniform(vec![t, model], 1.0, rng),
                probe: Tensor::uniform(vec![t, model], 1.0, rng),
                params,
                target: None,
            }
        }
        LayerKind::Relu | LayerKind::LeakyRelu | LayerKind::Sigmoid => {
            let d = rng.random_range(2..6usize);
            let act = match kind {
                LayerKind::Relu => Activation::Relu,
                LayerKind::LeakyRelu => Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
                _ => Activation::Sigmoid,
            };
            TrialSetup {
                built: Built::Act(act),
                input: away_from_zero(vec![t, d], rng),
                probe: Tensor::uniform(vec![t, d], 1.0, rng),
                params,
                target: None,
            }
        }
        LayerKind::MaeHead => {
            let d = rng.random_range(2..6usize);
            let target = Tensor::uniform(vec![t, d], 1.0, rng);
            let offsets = away_from_zero(vec![t, d], rng);
            let input = Tensor::new(
                vec![t, d],
                target.data().iter().zip(offsets.data()).map(|(a, b)| a + b).collect(),
            );
            TrialSetup {
                built: Built::MaeHead,
                input,
                probe: Tensor::zeros(vec![0]),
                params,
                target: Some(target),
            }
        }
    }
}

fn loss_value(setup: &TrialSetup, params: &ParamSet, input: &Tensor) -> f64 {
    let mut s = Session::new(params, false);
    let x = s.graph.leaf(input.clone(), false);
    let loss = build_loss(setup, &mut s, x);
    s.graph.value(loss).scalar_value()
}

fn build_loss(setup: &TrialSetup, s: &mut Session, x: ValueId) -> ValueId {
    match &setup.built {
        Built::MaeHead => {
            let t = s.graph.constant(setup.target.clone().unwrap());
            s.graph.mae(x, t)
        }
        built => {
            let y = built.forward(s, x).expect("trial shapes are valid");
            let r = s.graph.constant(setup.probe.clone());
            let weighted = s.graph.mul_elem(y, r);
            s.graph.sum(weighted)
        }
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Runs `trials` finite-difference comparisons for one layer kind and
/// reports the worst relative error over all parameters and inputs.
pub fn grad_check(kind: LayerKind, trials: usize, seed: u64) -> GradCheckReport {
    assert!(trials >= 1, "need at least one trial");
    let mut worst = 0.0f64;
    let mut checked = 0usize;

    for trial in 0..trials {
        let mut rng = crate::rng::indexed_rng(seed, "gradcheck", trial as u64);
        let setup = build_trial(kind, &mut rng);

        // analytic gradients
        let mut s = Session::new(&setup.params, true);
        let x = s.graph.leaf(setup.input.clone(), true);
        let loss = build_loss(&setup, &mut s, x);
        s.graph.backward(loss).expect("scalar loss");
        let param_grads = s.param_grads();
        let input_grad = s.graph.grad_tensor(x);

        // parameters
        for pi in 0..setup.params.len() {
            let analytic = &param_grads[pi];
            for j in 0..analytic.len() {
                let mut plus = setup.params.clone();
                plus.get_mut(ParamId(pi)).data_mut()[j] += FD_STEP;
                let mut minus = setup.params.clone();
                minus.get_mut(ParamId(pi)).data_mut()[j] -= FD_STEP;
                let numeric = (loss_value(&setup, &plus, &setup.input)
                    - loss_value(&setup, &minus, &setup.input))
                    / (2.0 * FD_STEP);
                worst = worst.max(rel_err(analytic.data()[j], numeric));
                checked += 1;
            }
        }

        // inputs
        for j in 0..setup.input.len() {
            let mut plus = setup.input.clone();
            plus.data_mut()[j] += FD_STEP;
            let mut minus = setup.input.clone();
            minus.data_mut()[j] -= FD_STEP;
            let numeric = (loss_value(&setup, &setup.params, &plus)
                - loss_value(&setup, &setup.params, &minus))
                / (2.0 * FD_STEP);
            worst = worst.max(rel_err(input_grad.data()[j], numeric));
            checked += 1;
        }
    }

    GradCheckReport { kind, trials, values_checked: checked, worst_rel_err: worst }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_passes_fd_check() {
        let report = grad_check(LayerKind::Dense, 3, 11);
        assert!(report.passed(), "worst {}", report.worst_rel_err);
        assert!(report.values_checked > 0);
    }

    #[test]
    fn mhsa_passes_fd_check() {
        let report = grad_check(LayerKind::MhsaCausal, 2, 12);
        assert!(report.passed(), "worst {}", report.worst_rel_err);
    }

    #[test]
    fn conv_passes_fd_check() {
        let report = grad_check(LayerKind::Conv1dCausal, 3, 13);
        assert!(report.passed(), "worst {}", report.worst_rel_err);
    }

    #[test]
    fn layernorm_passes_fd_check() {
        let report = grad_check(LayerKind::LayerNorm, 3, 14);
        assert!(report.passed(), "worst {}", report.worst_rel_err);
    }

    #[test]
    fn mae_head_passes_fd_check() {
        let report = grad_check(LayerKind::MaeHead, 3, 15);
        assert!(report.passed(), "worst {}", report.worst_rel_err);
    }
}
