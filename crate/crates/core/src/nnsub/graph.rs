//! Tape-based reverse-mode autodiff over [`Tensor`] values.
//!
//! A `Graph` records one forward computation; `backward` fills gradient
//! buffers for every node that (transitively) depends on a leaf created with
//! `requires_grad`. Graphs are cheap and built fresh for every training step.
//! All loops run in a fixed order, so a fixed graph evaluates bit-identically
//! across runs and thread counts.

use super::error::NnError;
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    MulElem(usize, usize),
    Scale(usize, f64),
    AddRow(usize, usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Transpose(usize),
    NarrowCols { src: usize, start: usize, len: usize },
    ConcatCols(Vec<usize>),
    SoftmaxRows(usize),
    CausalSoftmax(usize),
    LayerNorm { x: usize, gain: usize, bias: usize, eps: f64 },
    Conv1dCausal { x: usize, w: usize, b: usize },
    Mae(usize, usize),
    Mse(usize, usize),
    SoftmaxCrossEntropy { logits: usize, labels: Vec<usize> },
    Sum(usize),
    Mean(usize),
}

struct Node {
    value: Tensor,
    needs_grad: bool,
    op: Op,
}

/// One recorded forward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    nonfinite: Option<String>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> ValueId {
        self.push(value, requires_grad, Op::Leaf, "leaf")
    }

    /// Inserts a non-differentiable constant.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient buffer of a node, if backward reached it.
    pub fn grad(&self, id: ValueId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient shaped like the node's value; zeros if backward never
    /// reached it.
    pub fn grad_tensor(&self, id: ValueId) -> Tensor {
        let shape = self.nodes[id.0].value.shape().to_vec();
        match &self.grads[id.0] {
            Some(g) => Tensor::new(shape, g.clone()),
            None => Tensor::zeros(shape),
        }
    }

    /// Fails if any forward op produced a NaN or infinity.
    pub fn numerics_ok(&self) -> Result<(), NnError> {
        match &self.nonfinite {
            Some(msg) => Err(NnError::Numerics(msg.clone())),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op, opname: &str) -> ValueId {
        if self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(format!("non-finite values produced by {opname}"));
        }
        self.nodes.push(Node { value, needs_grad, op });
        self.grads.push(None);
        ValueId(self.nodes.len() - 1)
    }

    fn needs(&self, id: ValueId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- forward ops -------------------------------------------------

    /// (m,k) x (k,n) -> (m,n)
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rank(), 2, "matmul lhs must be rank 2");
        assert_eq!(tb.rank(), 2, "matmul rhs must be rank 2");
        assert_eq!(ta.dim1(), tb.dim0(), "matmul inner dims {} vs {}", ta.dim1(), tb.dim0());
        let (m, k, n) = (ta.dim0(), ta.dim1(), tb.dim1());
        let mut out = vec![0.0; m * n];
        mm_nn(ta.data(), tb.data(), m, k, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![m, n], out), needs, Op::MatMul(a.0, b.0), "matmul")
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let out: Vec<f64> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shapes");
        let out: Vec<f64> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul_elem(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let out: Vec<f64> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::MulElem(a.0, b.0), "mul_elem")
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out), needs, Op::Scale(a.0, c), "scale")
    }

    /// (t,d) + (d,) broadcast over rows.
    pub fn add_row(&mut self, a: ValueId, bias: ValueId) -> ValueId {
        let (ta, tb) = (self.value(a), self.value(bias));
        assert_eq!(ta.rank(), 2, "add_row lhs must be rank 2");
        assert_eq!(tb.len(), ta.dim1(), "bias width {} vs {}", tb.len(), ta.dim1());
        let (t, d) = (ta.dim0(), ta.dim1());
        let mut out = Vec::with_capacity(t * d);
        for i in 0..t {
            for j in 0..d {
                out.push(ta.data()[i * d + j] + tb.data()[j]);
            }
        }
        let needs = self.needs(a) || self.needs(bias);
        self.push(Tensor::new(vec![t, d], out), needs, Op::AddRow(a.0, bias.0), "add_row")
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out), needs, Op::Relu(a.0), "relu")
    }

    pub fn leaky_relu(&mut self, a: ValueId, slope: f64) -> ValueId {
        let out: Vec<f64> =
            self.value(a).data().iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out), needs, Op::LeakyRelu(a.0, slope), "leaky_relu")
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| stable_sigmoid(x)).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out), needs, Op::Sigmoid(a.0), "sigmoid")
    }

    pub fn transpose(&mut self, a: ValueId) -> ValueId {
        let ta = self.value(a);
        assert_eq!(ta.rank(), 2, "transpose needs rank 2");
        let (m, n) = (ta.dim0(), ta.dim1());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ta.data()[i * n + j];
            }
        }
        let needs = self.needs(a);
        self.push(Tensor::new(vec![n, m], out), needs, Op::Transpose(a.0), "transpose")
    }

    /// Column slice [start, start+len) of a rank-2 tensor.
    pub fn narrow_cols(&mut self, a: ValueId, start: usize, len: usize) -> ValueId {
        let ta = self.value(a);
        assert_eq!(ta.rank(), 2, "narrow_cols needs rank 2");
        let (t, d) = (ta.dim0(), ta.dim1());
        assert!(start + len <= d, "narrow [{start}, {}) out of width {d}", start + len);
        let mut out = Vec::with_capacity(t * len);
        for i in 0..t {
            out.extend_from_slice(&ta.data()[i * d + start..i * d + start + len]);
        }
        let needs = self.needs(a);
        self.push(
            Tensor::new(vec![t, len], out),
            needs,
            Op::NarrowCols { src: a.0, start, len },
            "narrow_cols",
        )
    }

    /// Concatenates rank-2 tensors along the column axis.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty(), "concat of nothing");
        let t = self.value(parts[0]).dim0();
        let total: usize = parts.iter().map(|&p| self.value(p).dim1()).sum();
        for &p in parts {
            assert_eq!(self.value(p).dim0(), t, "concat rows must agree");
            assert_eq!(self.value(p).rank(), 2, "concat needs rank 2");
        }
        let mut out = Vec::with_capacity(t * total);
        for i in 0..t {
            for &p in parts {
                let tp = self.value(p);
                let d = tp.dim1();
                out.extend_from_slice(&tp.data()[i * d..(i + 1) * d]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let ids = parts.iter().map(|p| p.0).collect();
        self.push(Tensor::new(vec![t, total], out), needs, Op::ConcatCols(ids), "concat_cols")
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: ValueId) -> ValueId {
        let ta = self.value(a);
        assert_eq!(ta.rank(), 2, "softmax needs rank 2");
        let (t, d) = (ta.dim0(), ta.dim1());
        let mut out = vec![0.0; t * d];
        for i in 0..t {
            softmax_into(&ta.data()[i * d..(i + 1) * d], d, &mut out[i * d..(i + 1) * d]);
        }
        let needs = self.needs(a);
        self.push(Tensor::new(vec![t, d], out), needs, Op::SoftmaxRows(a.0), "softmax_rows")
    }

    /// Row-wise softmax over a square score matrix where row i only sees
    /// columns j <= i; strictly-future columns get exactly zero weight.
    pub fn causal_softmax(&mut self, a: ValueId) -> ValueId {
        let ta = self.value(a);
        assert_eq!(ta.rank(), 2, "causal softmax needs rank 2");
        assert_eq!(ta.dim0(), ta.dim1(), "causal softmax needs a square score matrix");
        let t = ta.dim0();
        let mut out = vec![0.0; t * t];
        for i in 0..t {
            softmax_into(&ta.data()[i * t..i * t + i + 1], i + 1, &mut out[i * t..i * t + i + 1]);
        }
        let needs = self.needs(a);
        self.push(Tensor::new(vec![t, t], out), needs, Op::CausalSoftmax(a.0), "causal_softmax")
    }

    /// Per-row layer normalization over the feature axis with learned gain
    /// and bias; variance stabilized by `eps`.
    pub fn layer_norm(&mut self, x: ValueId, gain: ValueId, bias: ValueId, eps: f64) -> ValueId {
        let tx = self.value(x);
        assert_eq!(tx.rank(), 2, "layer_norm needs rank 2");
        let (t, d) = (tx.dim0(), tx.dim1());
        assert_eq!(self.value(gain).len(), d, "gain width");
        assert_eq!(self.value(bias).len(), d, "bias width");
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = vec![0.0; t * d];
        for i in 0..t {
            let row = &tx.data()[i * d..(i + 1) * d];
            let (mu, inv) = row_norm_stats(row, eps);
            for j in 0..d {
                out[i * d + j] = g[j] * (row[j] - mu) * inv + b[j];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            Tensor::new(vec![t, d], out),
            needs,
            Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, eps },
            "layer_norm",
        )
    }

    /// Causal 1-D convolution over time: output t sees inputs t-k+1..=t
    /// (left zero padding of k-1). x: (t,cin), w: (k,cin,cout), b: (cout,).
    pub fn conv1d_causal(&mut self, x: ValueId, w: ValueId, b: ValueId) -> ValueId {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(tx.rank(), 2, "conv input must be rank 2");
        assert_eq!(tw.rank(), 3, "conv weight must be rank 3");
        let (t, cin) = (tx.dim0(), tx.dim1());
        let (k, wcin, cout) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        assert_eq!(cin, wcin, "conv channels {cin} vs weight {wcin}");
        assert_eq!(tb.len(), cout, "conv bias width");
        let mut out = vec![0.0; t * cout];
        let (xd, wd, bd) = (tx.data(), tw.data(), tb.data());
        for ti in 0..t {
            let orow = &mut out[ti * cout..(ti + 1) * cout];
            orow.copy_from_slice(bd);
            for d in 0..k {
                let src = ti as isize - (k - 1 - d) as isize;
                if src < 0 {
                    continue;
                }
                let xrow = &xd[src as usize * cin..(src as usize + 1) * cin];
                for (ci, &xv) in xrow.iter().enumerate() {
                    if xv != 0.0 {
                        let wrow = &wd[(d * cin + ci) * cout..(d * cin + ci + 1) * cout];
                        for (o, &wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            Tensor::new(vec![t, cout], out),
            needs,
            Op::Conv1dCausal { x: x.0, w: w.0, b: b.0 },
            "conv1d_causal",
        )
    }

    /// Mean absolute error over all elements; the subgradient at zero is 0.
    pub fn mae(&mut self, pred: ValueId, target: ValueId) -> ValueId {
        assert_eq!(self.value(pred).shape(), self.value(target).shape(), "mae shapes");
        let n = self.value(pred).len().max(1);
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n as f64;
        let needs = self.needs(pred) || self.needs(target);
        self.push(Tensor::scalar(loss), needs, Op::Mae(pred.0, target.0), "mae")
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: ValueId, target: ValueId) -> ValueId {
        assert_eq!(self.value(pred).shape(), self.value(target).shape(), "mse shapes");
        let n = self.value(pred).len().max(1);
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        let needs = self.needs(pred) || self.needs(target);
        self.push(Tensor::scalar(loss), needs, Op::Mse(pred.0, target.0), "mse")
    }

    /// Mean cross-entropy of row-softmaxed logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: ValueId, labels: &[usize]) -> ValueId {
        let tl = self.value(logits);
        assert_eq!(tl.rank(), 2, "logits must be rank 2");
        let (t, c) = (tl.dim0(), tl.dim1());
        assert_eq!(labels.len(), t, "one label per row");
        assert!(labels.iter().all(|&l| l < c), "label out of range");
        let mut loss = 0.0;
        for i in 0..t {
            let row = &tl.data()[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        loss /= t.max(1) as f64;
        let needs = self.needs(logits);
        self.push(
            Tensor::scalar(loss),
            needs,
            Op::SoftmaxCrossEntropy { logits: logits.0, labels: labels.to_vec() },
            "softmax_cross_entropy",
        )
    }

    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let s = self.value(a).data().iter().sum::<f64>();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), needs, Op::Sum(a.0), "sum")
    }

    pub fn mean(&mut self, a: ValueId) -> ValueId {
        let n = self.value(a).len().max(1);
        let s = self.value(a).data().iter().sum::<f64>() / n as f64;
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), needs, Op::Mean(a.0), "mean")
    }

    // ---- backward ------------------------------------------------------

    /// Populates gradients of every `requires_grad` leaf reachable from
    /// `loss`. `loss` must be scalar.
    pub fn backward(&mut self, loss: ValueId) -> Result<(), NnError> {
        self.numerics_ok()?;
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NnError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);

        let nodes = &self.nodes;
        let grads = &mut self.grads;

        for idx in (0..=loss.0).rev() {
            if matches!(nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[idx].take() else { continue };
            backprop_one(nodes, grads, idx, &gout);
            grads[idx] = Some(gout);
        }
        Ok(())
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_into(row: &[f64], len: usize, out: &mut [f64]) {
    let mx = row[..len].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for j in 0..len {
        let e = (row[j] - mx).exp();
        out[j] = e;
        sum += e;
    }
    for o in out[..len].iter_mut() {
        *o /= sum;
    }
}

fn row_norm_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let d = row.len() as f64;
    let mu = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d;
    (mu, 1.0 / (var + eps).sqrt())
}

/// out[rows, cols] += a[rows, inner] * b[inner, cols]
fn mm_nn(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let arow = &a[i * inner..(i + 1) * inner];
        let orow = &mut out[i * cols..(i + 1) * cols];
        for (k, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[k * cols..(k + 1) * cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// out[rows, cols] += a[rows, inner] * b[cols, inner]^T
fn mm_nt(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let arow = &a[i * inner..(i + 1) * inner];
        let orow = &mut out[i * cols..(i + 1) * cols];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * inner..(j + 1) * inner];
            let mut acc = 0.0;
            for k in 0..inner {
                acc += arow[k] * brow[k];
            }
            *o += acc;
        }
    }
}

/// out[inner, cols] += a[rows, inner]^T * b[rows, cols]
fn mm_tn(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let arow = &a[i * inner..(i + 1) * inner];
        let brow = &b[i * cols..(i + 1) * cols];
        for (k, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out[k * cols..(k + 1) * cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

fn ensure<'a>(grads: &'a mut [Option<Vec<f64>>], i: usize, len: usize) -> &'a mut [f64] {
    if grads[i].is_none() {
        grads[i] = Some(vec![0.0; len]);
    }
    grads[i].as_mut().unwrap()
}

fn backprop_one(nodes: &[Node], grads: &mut [Option<Vec<f64>>], idx: usize, gout: &[f64]) {
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (a, b) = (*a, *b);
            let (ta, tb) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (ta.dim0(), ta.dim1(), tb.dim1());
            if nodes[a].needs_grad {
                let ga = ensure(grads, a, m * k);
                mm_nt(gout, tb.data(), m, n, k, ga);
            }
            if nodes[b].needs_grad {
                let gb = ensure(grads, b, k * n);
                mm_tn(ta.data(), gout, m, k, n, gb);
            }
        }
        Op::Add(a, b) => {
            for &src in &[*a, *b] {
                if nodes[src].needs_grad {
                    let g = ensure(grads, src, gout.len());
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                }
            }
        }
        Op::Sub(a, b) => {
            if nodes[*a].needs_grad {
                let g = ensure(grads, *a, gout.len());
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go;
                }
            }
            if nodes[*b].needs_grad {
                let g = ensure(grads, *b, gout.len());
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi -= go;
                }
            }
        }
        Op::MulElem(a, b) => {
            let (a, b) = (*a, *b);
            if nodes[a].needs_grad {
                let vb = nodes[b].value.data().to_vec();
                let g = ensure(grads, a, gout.len());
                for i in 0..gout.len() {
                    g[i] += gout[i] * vb[i];
                }
            }
            if nodes[b].needs_grad {
                let va = nodes[a].value.data().to_vec();
                let g = ensure(grads, b, gout.len());
                for i in 0..gout.len() {
                    g[i] += gout[i] * va[i];
                }
            }
        }
        Op::Scale(a, c) => {
            if nodes[*a].needs_grad {
                let c = *c;
                let g = ensure(grads, *a, gout.len());
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += c * go;
                }
            }
        }
        Op::AddRow(a, bias) => {
            let (t, d) = (nodes[*a].value.dim0(), nodes[*a].value.dim1());
            if nodes[*a].needs_grad {
                let g = ensure(grads, *a, t * d);
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go;
                }
            }
            if nodes[*bias].needs_grad {
                let g = ensure(grads, *bias, d);
                for i in 0..t {
                    for j in 0..d {
                        g[j] += gout[i * d + j];
                    }
                }
            }
        }
        Op::Relu(a) => {
            if nodes[*a].needs_grad {
                let va = &nodes[*a].value;
                let mask: Vec<f64> = va.data().iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
                let g = ensure(grads, *a, gout.len());
                for i in 0..gout.len() {
                    g[i] += gout[i] * mask[i];
                }
            }
        }
        Op::LeakyRelu(a, slope) => {
            if nodes[*a].needs_grad {
                let slope = *slope;
                let factors: Vec<f64> = nodes[*a]
                    .value
                    .data()
                    .iter()
                    .map(|&x| if x > 0.0 { 1.0 } else { slope })
                    .collect();
                let g = ensure(grads, *a, gout.len());
                for i in 0..gout.len() {
                    g[i] += gout[i] * factors[i];
                }
            }
        }
        Op::Sigmoid(a) => {
            if nodes[*a].needs_grad {
                let s = nodes[idx].value.data().to_vec();
                let g = ensure(grads, *a, gout.len());
                for i in 0..gout.len() {
                    g[i] += gout[i] * s[i] * (1.0 - s[i]);
                }
            }
        }
        Op::Transpose(a) => {
            if nodes[*a].needs_grad {
                let (m, n) = (nodes[*a].value.dim0(), nodes[*a].value.dim1());
                let g = ensure(grads, *a, m * n);
                // gout has shape (n, m)
                for j in 0..n {
                    for i in 0..m {
                        g[i * n + j] += gout[j * m + i];
                    }
                }
            }
        }
        Op::NarrowCols { src, start, len } => {
            if nodes[*src].needs_grad {
                let (t, d) = (nodes[*src].value.dim0(), nodes[*src].value.dim1());
                let (start, len) = (*start, *len);
                let g = ensure(grads, *src, t * d);
                for i in 0..t {
                    for j in 0..len {
                        g[i * d + start + j] += gout[i * len + j];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let t = nodes[idx].value.dim0();
            let total = nodes[idx].value.dim1();
            let mut offset = 0usize;
            for &p in parts {
                let d = nodes[p].value.dim1();
                if nodes[p].needs_grad {
                    let g = ensure(grads, p, t * d);
                    for i in 0..t {
                        for j in 0..d {
                            g[i * d + j] += gout[i * total + offset + j];
                        }
                    }
                }
                offset += d;
            }
        }
        Op::SoftmaxRows(a) | Op::CausalSoftmax(a) => {
            if nodes[*a].needs_grad {
                let (t, d) = (nodes[idx].value.dim0(), nodes[idx].value.dim1());
                let s = nodes[idx].value.data().to_vec();
                let g = ensure(grads, *a, t * d);
                for i in 0..t {
                    let srow = &s[i * d..(i + 1) * d];
                    let grow = &gout[i * d..(i + 1) * d];
                    let dot: f64 = srow.iter().zip(grow).map(|(x, y)| x * y).sum();
                    for j in 0..d {
                        g[i * d + j] += srow[j] * (grow[j] - dot);
                    }
                }
            }
        }
        Op::LayerNorm { x, gain, bias, eps } => {
            let (x, gain, bias, eps) = (*x, *gain, *bias, *eps);
            let tx = &nodes[x].value;
            let (t, d) = (tx.dim0(), tx.dim1());
            let gval = nodes[gain].value.data().to_vec();
            let mut gx_acc = vec![0.0; t * d];
            let mut ggain_acc = vec![0.0; d];
            let mut gbias_acc = vec![0.0; d];
            for i in 0..t {
                let row = &tx.data()[i * d..(i + 1) * d];
                let grow = &gout[i * d..(i + 1) * d];
                let (mu, inv) = row_norm_stats(row, eps);
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for j in 0..d {
                    let xh = (row[j] - mu) * inv;
                    let alpha = grow[j] * gval[j];
                    m1 += alpha;
                    m2 += alpha * xh;
                    ggain_acc[j] += grow[j] * xh;
                    gbias_acc[j] += grow[j];
                }
                m1 /= d as f64;
                m2 /= d as f64;
                for j in 0..d {
                    let xh = (row[j] - mu) * inv;
                    let alpha = grow[j] * gval[j];
                    gx_acc[i * d + j] = inv * (alpha - m1 - xh * m2);
                }
            }
            if nodes[x].needs_grad {
                let g = ensure(grads, x, t * d);
                for i in 0..t * d {
                    g[i] += gx_acc[i];
                }
            }
            if nodes[gain].needs_grad {
                let g = ensure(grads, gain, d);
                for j in 0..d {
                    g[j] += ggain_acc[j];
                }
            }
            if nodes[bias].needs_grad {
                let g = ensure(grads, bias, d);
                for j in 0..d {
                    g[j] += gbias_acc[j];
                }
            }
        }
        Op::Conv1dCausal { x, w, b } => {
            let (x, w, b) = (*x, *w, *b);
            let tx = &nodes[x].value;
            let tw = &nodes[w].value;
            let (t, cin) = (tx.dim0(), tx.dim1());
            let (k, cout) = (tw.shape()[0], tw.shape()[2]);
            let xd = tx.data();
            let wd = tw.data();
            let mut gx_acc = vec![0.0; t * cin];
            let mut gw_acc = vec![0.0; k * cin * cout];
            let mut gb_acc = vec![0.0; cout];
            for ti in 0..t {
                let grow = &gout[ti * cout..(ti + 1) * cout];
                for (gb, &go) in gb_acc.iter_mut().zip(grow) {
                    *gb += go;
                }
                for d in 0..k {
                    let src = ti as isize - (k - 1 - d) as isize;
                    if src < 0 {
                        continue;
                    }
                    let src = src as usize;
                    for ci in 0..cin {
                        let xv = xd[src * cin + ci];
                        let base = (d * cin + ci) * cout;
                        let mut acc = 0.0;
                        for co in 0..cout {
                            gw_acc[base + co] += xv * grow[co];
                            acc += wd[base + co] * grow[co];
                        }
                        gx_acc[src * cin + ci] += acc;
                    }
                }
            }
            if nodes[x].needs_grad {
                let g = ensure(grads, x, t * cin);
                for i in 0..t * cin {
                    g[i] += gx_acc[i];
                }
            }
            if nodes[w].needs_grad {
                let g = ensure(grads, w, k * cin * cout);
                for i in 0..g.len() {
                    g[i] += gw_acc[i];
                }
            }
            if nodes[b].needs_grad {
                let g = ensure(grads, b, cout);
                for i in 0..cout {
                    g[i] += gb_acc[i];
                }
            }
        }
        Op::Mae(a, b) => {
            let (a, b) = (*a, *b);
            let n = nodes[a].value.len().max(1) as f64;
            let go = gout[0];
            let diffs: Vec<f64> = nodes[a]
                .value
                .data()
                .iter()
                .zip(nodes[b].value.data())
                .map(|(x, y)| x - y)
                .collect();
            if nodes[a].needs_grad {
                let g = ensure(grads, a, diffs.len());
                for (gi, &d) in g.iter_mut().zip(&diffs) {
                    *gi += go * sign0(d) / n;
                }
            }
            if nodes[b].needs_grad {
                let g = ensure(grads, b, diffs.len());
                for (gi, &d) in g.iter_mut().zip(&diffs) {
                    *gi -= go * sign0(d) / n;
                }
            }
        }
        Op::Mse(a, b) => {
            let (a, b) = (*a, *b);
            let n = nodes[a].value.len().max(1) as f64;
            let go = gout[0];
            let diffs: Vec<f64> = nodes[a]
                .value
                .data()
                .iter()
                .zip(nodes[b].value.data())
                .map(|(x, y)| x - y)
                .collect();
            if nodes[a].needs_grad {
                let g = ensure(grads, a, diffs.len());
                for (gi, &d) in g.iter_mut().zip(&diffs) {
                    *gi += go * 2.0 * d / n;
                }
            }
            if nodes[b].needs_grad {
                let g = ensure(grads, b, diffs.len());
                for (gi, &d) in g.iter_mut().zip(&diffs) {
                    *gi -= go * 2.0 * d / n;
                }
            }
        }
        Op::SoftmaxCrossEntropy { logits, labels } => {
            if nodes[*logits].needs_grad {
                let tl = &nodes[*logits].value;
                let (t, c) = (tl.dim0(), tl.dim1());
                let go = gout[0] / t.max(1) as f64;
                let mut probs = vec![0.0; c];
                let g = ensure(grads, *logits, t * c);
                for i in 0..t {
                    softmax_into(&tl.data()[i * c..(i + 1) * c], c, &mut probs);
                    for j in 0..c {
                        let indicator = if labels[i] == j { 1.0 } else { 0.0 };
                        g[i * c + j] += go * (probs[j] - indicator);
                    }
                }
            }
        }
        Op::Sum(a) => {
            if nodes[*a].needs_grad {
                let go = gout[0];
                let n = nodes[*a].value.len();
                let g = ensure(grads, *a, n);
                for gi in g.iter_mut() {
                    *gi += go;
                }
            }
        }
        Op::Mean(a) => {
            if nodes[*a].needs_grad {
                let n = nodes[*a].value.len().max(1);
                let go = gout[0] / n as f64;
                let g = ensure(grads, *a, n);
                for gi in g.iter_mut() {
                    *gi += go;
                }
            }
        }
    }
}

fn sign0(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]), true);
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn mae_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]), true);
        let t = g.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let loss = g.mae(x, t);
        assert_eq!(g.value(loss).scalar_value(), 0.0);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_chain_matches_hand_gradient() {
        // loss = sum(x W), d loss / d W[i][j] = sum_t x[t][i]
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let w = g.leaf(Tensor::new(vec![2, 2], vec![0.5, -0.5, 1.0, 2.0]), true);
        let y = g.matmul(x, w);
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn causal_softmax_rows_sum_to_one_and_mask_future() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 3], vec![0.3, 9.0, -4.0, 1.0, 2.0, 7.7, 0.1, 0.2, 0.3]));
        let s = g.causal_softmax(x);
        let v = g.value(s);
        assert_eq!(v.at2(0, 0), 1.0);
        assert_eq!(v.at2(0, 1), 0.0);
        assert_eq!(v.at2(0, 2), 0.0);
        assert_eq!(v.at2(1, 2), 0.0);
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| v.at2(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_centers_and_scales() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 2.0]));
        let gain = g.constant(Tensor::filled(vec![4], 1.0));
        let bias = g.constant(Tensor::zeros(vec![4]));
        let y = g.layer_norm(x, gain, bias, 1e-5);
        let v = g.value(y);
        for i in 0..2 {
            let row = v.row(i);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-7, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn layer_norm_on_constant_rows_stays_finite() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled(vec![2, 4], 3.0), true);
        let gain = g.leaf(Tensor::filled(vec![4], 1.0), true);
        let bias = g.leaf(Tensor::zeros(vec![4]), true);
        let y = g.layer_norm(x, gain, bias, 1e-5);
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert!(g.grad(gain).unwrap().iter().all(|v| v.is_finite()));
        assert!(g.grad(x).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn conv_impulse_response_is_causal_and_local() {
        // kernel 3 over an impulse at t=5: only outputs 5, 6, 7 can change
        let t = 10;
        let mut impulse = Tensor::zeros(vec![t, 1]);
        impulse.data_mut()[5] = 1.0;

        let mut g = Graph::new();
        let x0 = g.constant(Tensor::zeros(vec![t, 1]));
        let x1 = g.constant(impulse);
        let w = g.constant(Tensor::new(vec![3, 1, 1], vec![0.25, -0.5, 1.5]));
        let b = g.constant(Tensor::new(vec![1], vec![0.1]));
        let y0 = g.conv1d_causal(x0, w, b);
        let y1 = g.conv1d_causal(x1, w, b);
        for ti in 0..t {
            let d = g.value(y1).at2(ti, 0) - g.value(y0).at2(ti, 0);
            match ti {
                5 => assert!((d - 1.5).abs() < 1e-12),
                6 => assert!((d - -0.5).abs() < 1e-12),
                7 => assert!((d - 0.25).abs() < 1e-12),
                _ => assert_eq!(d, 0.0, "leak at {ti}"),
            }
        }
    }

    #[test]
    fn nonfinite_forward_is_reported() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1], vec![1e308]));
        let y = g.scale(x, 10.0); // overflows to inf
        let _ = y;
        assert!(g.numerics_ok().is_err());
    }

    #[test]
    fn backward_on_non_scalar_is_a_usage_error() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![2, 2]), true);
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(NnError::Usage(_))));
    }
}
