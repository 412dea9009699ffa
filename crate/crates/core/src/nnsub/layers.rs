//! Differentiable layers over the graph substrate.
//!
//! Layers own parameter handles into a [`ParamSet`] and describe how to wire
//! a forward pass; parameters are initialized with uniform fan-in scaling
//! (+-sqrt(1/fan_in)) from the caller's seeded RNG.

use rand::Rng;

use super::error::NnError;
use super::graph::ValueId;
use super::params::{ParamId, ParamSet, Session};
use super::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Elementwise activations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, s: &mut Session, x: ValueId) -> ValueId {
        match *self {
            Activation::Relu => s.graph.relu(x),
            Activation::LeakyRelu(slope) => s.graph.leaky_relu(x, slope),
            Activation::Sigmoid => s.graph.sigmoid(x),
        }
    }
}

fn fan_in_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in.max(1) as f64).sqrt()
}

/// y = x W + b with W: (in, out).
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(in_dim);
        let w = ps.add(format!("{name}.w"), Tensor::uniform(vec![in_dim, out_dim], bound, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
        Dense { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        check_input(s, x, self.in_dim, "dense")?;
        let w = s.param(self.w);
        let b = s.param(self.b);
        let y = s.graph.matmul(x, w);
        let y = s.graph.add_row(y, b);
        s.graph.numerics_ok()?;
        Ok(y)
    }
}

/// Causal 1-D convolution over time with left-only padding of k-1 frames.
#[derive(Clone, Debug)]
pub struct Conv1dCausal {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv1dCausal {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        kernel: usize,
        in_ch: usize,
        out_ch: usize,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(kernel * in_ch);
        let w = ps.add(
            format!("{name}.w"),
            Tensor::uniform(vec![kernel, in_ch, out_ch], bound, rng),
        );
        let b = ps.add(format!("{name}.b"), Tensor::zeros(vec![out_ch]));
        Conv1dCausal { w, b, kernel, in_ch, out_ch }
    }

    pub fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        check_input(s, x, self.in_ch, "conv1d_causal")?;
        let w = s.param(self.w);
        let b = s.param(self.b);
        let y = s.graph.conv1d_causal(x, w, b);
        s.graph.numerics_ok()?;
        Ok(y)
    }
}

/// Per-frame layer normalization with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gain = ps.add(format!("{name}.gain"), Tensor::filled(vec![dim], 1.0));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(vec![dim]));
        LayerNorm { gain, bias, dim }
    }

    pub fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        check_input(s, x, self.dim, "layer_norm")?;
        let gain = s.param(self.gain);
        let bias = s.param(self.bias);
        let y = s.graph.layer_norm(x, gain, bias, LAYER_NORM_EPS);
        s.graph.numerics_ok()?;
        Ok(y)
    }
}

/// Causal multi-head self-attention: per head softmax(Q K^T / sqrt(d_head))
/// masked to j <= i, applied to V, heads concatenated and output-projected.
#[derive(Clone, Debug)]
pub struct MhsaCausal {
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub heads: usize,
    pub head_dim: usize,
}

impl MhsaCausal {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        heads: usize,
        head_dim: usize,
        rng: &mut R,
    ) -> Self {
        let model = heads * head_dim;
        MhsaCausal {
            wq: Dense::new(ps, &format!("{name}.q"), model, model, rng),
            wk: Dense::new(ps, &format!("{name}.k"), model, model, rng),
            wv: Dense::new(ps, &format!("{name}.v"), model, model, rng),
            wo: Dense::new(ps, &format!("{name}.o"), model, model, rng),
            heads,
            head_dim,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn forward(&self, s: &mut Session, x: ValueId) -> Result<ValueId, NnError> {
        check_input(s, x, self.model_dim(), "mhsa_causal")?;
        let q = self.wq.forward(s, x)?;
        let k = self.wk.forward(s, x)?;
        let v = self.wv.forward(s, x)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let offset = h * self.head_dim;
            let qh = s.graph.narrow_cols(q, offset, self.head_dim);
            let kh = s.graph.narrow_cols(k, offset, self.head_dim);
            let vh = s.graph.narrow_cols(v, offset, self.head_dim);
            let kt = s.graph.transpose(kh);
            let scores = s.graph.matmul(qh, kt);
            let scores = s.graph.scale(scores, scale);
            let attn = s.graph.causal_softmax(scores);
            head_outputs.push(s.graph.matmul(attn, vh));
        }
        let merged = s.graph.concat_cols(&head_outputs);
        let y = self.wo.forward(s, merged)?;
        s.graph.numerics_ok()?;
        Ok(y)
    }
}

fn check_input(s: &Session, x: ValueId, want: usize, layer: &str) -> Result<(), NnError> {
    let t = s.graph.value(x);
    if t.rank() != 2 {
        return Err(NnError::Shape(format!(
            "{layer}: expected a (frames, dim) input, got shape {:?}",
            t.shape()
        )));
    }
    if t.dim1() != want {
        return Err(NnError::Shape(format!(
            "{layer}: input width {} does not match layer width {want}",
            t.dim1()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_is_identity() {
        let mut ps = ParamSet::new();
        let mut rng = crate::rng::stream_rng(0, "layers");
        let dense = Dense::new(&mut ps, "d", 3, 3, &mut rng);
        *ps.get_mut(dense.w) =
            Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let mut s = Session::new(&ps, false);
        let x = s.graph.constant(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.0, 5.0, -6.0]));
        let y = dense.forward(&mut s, x).unwrap();
        assert_eq!(s.graph.value(y).data(), s.graph.value(x).data());
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let mut ps = ParamSet::new();
        let mut rng = crate::rng::stream_rng(0, "layers");
        let dense = Dense::new(&mut ps, "d", 3, 2, &mut rng);
        let mut s = Session::new(&ps, false);
        let x = s.graph.constant(Tensor::zeros(vec![2, 4]));
        assert!(matches!(dense.forward(&mut s, x), Err(NnError::Shape(_))));
    }

    #[test]
    fn mhsa_first_row_attends_only_to_itself() {
        let mut ps = ParamSet::new();
        let mut rng = crate::rng::stream_rng(3, "layers");
        let mhsa = MhsaCausal::new(&mut ps, "a", 2, 3, &mut rng);
        let mut s = Session::new(&ps, false);
        let x = Tensor::uniform(vec![5, 6], 1.0, &mut rng);
        let xid = s.graph.leaf(x.clone(), false);
        let y = mhsa.forward(&mut s, xid).unwrap();

        // row 0 of the output must equal row 0 of x pushed through V then O
        let mut s2 = Session::new(&ps, false);
        let x0 = Tensor::new(vec![1, 6], x.row(0).to_vec());
        let x0id = s2.graph.leaf(x0, false);
        let v0 = mhsa.wv.forward(&mut s2, x0id).unwrap();
        let o0 = mhsa.wo.forward(&mut s2, v0).unwrap();

        let got = s.graph.value(y).row(0).to_vec();
        let expect = s2.graph.value(o0).row(0).to_vec();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn attention_is_causal_bitwise() {
        let mut ps = ParamSet::new();
        let mut rng = crate::rng::stream_rng(4, "layers");
        let mhsa = MhsaCausal::new(&mut ps, "a", 2, 4, &mut rng);
        let x = Tensor::uniform(vec![7, 8], 1.0, &mut rng);
        let cut = 4usize;
        let mut zeroed = x.clone();
        for t in cut..7 {
            for j in 0..8 {
                zeroed.set2(t, j, 0.0);
            }
        }

        let mut s1 = Session::new(&ps, false);
        let x1 = s1.graph.leaf(x, false);
        let y1 = mhsa.forward(&mut s1, x1).unwrap();
        let mut s2 = Session::new(&ps, false);
        let x2 = s2.graph.leaf(zeroed, false);
        let y2 = mhsa.forward(&mut s2, x2).unwrap();

        for t in 0..cut {
            assert_eq!(s1.graph.value(y1).row(t), s2.graph.value(y2).row(t), "frame {t}");
        }
    }

    #[test]
    fn conv_is_causal_bitwise() {
        let mut ps = ParamSet::new();
        let mut rng = crate::rng::stream_rng(5, "layers");
        let conv = Conv1dCausal::new(&mut ps, "c", 3, 2, 4, &mut rng);
        let x = Tensor::uniform(vec![9, 2], 1.0, &mut rng);
        let cut = 5usize;
        let mut zeroed = x.clone();
        for t in cut..9 {
            for j in 0..2 {
                zeroed.set2(t, j, 0.0);
            }
        }
        let mut s1 = Session::new(&ps, false);
        let x1 = s1.graph.leaf(x, false);
        let y1 = conv.forward(&mut s1, x1).unwrap();
        let mut s2 = Session::new(&ps, false);
        let x2 = s2.graph.leaf(zeroed, false);
        let y2 = conv.forward(&mut s2, x2).unwrap();
        for t in 0..cut {
            assert_eq!(s1.graph.value(y1).row(t), s2.graph.value(y2).row(t), "frame {t}");
        }
    }
}
