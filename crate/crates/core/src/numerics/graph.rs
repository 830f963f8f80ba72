//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every primitive in creation order, which is already a
//! topological order. [`Graph::backward`] walks the tape in exact reverse and
//! accumulates gradients into fixed per-node slots, so results are
//! bit-reproducible for identical inputs.

use super::tensor::{gemm, Tensor};
use crate::error::{structural, Error, Result};

/// Lower/upper clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Variance floor used by [`Graph::standardize_rows`].
pub const STANDARDIZE_EPS: f64 = 1e-4;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    RowMean(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    Mse(Var, Var),
    Bce(Var, Tensor),
    CrossEntropy(Var, Vec<usize>),
    StandardizeRows(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add-const",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::Clamp(..) => "clamp",
            Op::SoftmaxRows(..) => "softmax-rows",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row-sum",
            Op::RowMean(..) => "row-mean",
            Op::Concat(..) => "concat",
            Op::SliceCols(..) => "slice",
            Op::Reshape(..) => "reshape",
            Op::Mse(..) => "mse",
            Op::Bce(..) => "bce",
            Op::CrossEntropy(..) => "cross-entropy-per-sample",
            Op::StandardizeRows(..) => "standardize-rows",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. Trainable leaves always
    /// have an entry (zeros when unreachable from the loss).
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Gradients for a list of leaves, in order.
    pub fn collect(&mut self, vars: &[Var]) -> Result<Vec<Tensor>> {
        vars.iter()
            .map(|&v| {
                self.take(v)
                    .ok_or_else(|| structural!("node {} is not a trainable leaf", v.0))
            })
            .collect()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "node {id} ({}) produced a non-finite value",
                op.name()
            )));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b, _) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Mse(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Concat(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Abs(a)
            | Op::Clamp(a, ..)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::RowMean(a)
            | Op::SliceCols(a, _)
            | Op::Reshape(a)
            | Op::Bce(a, _)
            | Op::CrossEntropy(a, _)
            | Op::StandardizeRows(a) => self.needs(*a),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(id))
    }

    /// A leaf that receives a gradient (a parameter or a differentiated input).
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        let v = self.push(Op::Leaf, value)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(structural!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), false, self.value(b).data(), false, m, k, n, &mut out, false);
        self.push(Op::MatMul(a, b), Tensor::new([m, n], out)?)
    }

    /// Elementwise sum. `b` may also be a row vector (`[m]` or `[1, m]`)
    /// broadcast over the rows of `a`, or a single value.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let mode = if sa == sb {
            Broadcast::Same
        } else if sa.len() == 2
            && ((sb.len() == 1 && sb[0] == sa[1]) || (sb.len() == 2 && sb[0] == 1 && sb[1] == sa[1]))
        {
            Broadcast::Row
        } else if self.value(b).numel() == 1 {
            Broadcast::Scalar
        } else {
            return Err(structural!("add {:?} + {:?}", sa, sb));
        };
        let av = self.value(a);
        let bv = self.value(b).data();
        let mut out = av.clone();
        match mode {
            Broadcast::Same => out.data_mut().iter_mut().zip(bv).for_each(|(o, b)| *o += b),
            Broadcast::Row => {
                let cols = bv.len();
                out.data_mut()
                    .chunks_mut(cols)
                    .for_each(|row| row.iter_mut().zip(bv).for_each(|(o, b)| *o += b));
            }
            Broadcast::Scalar => out.data_mut().iter_mut().for_each(|o| *o += bv[0]),
        }
        self.push(Op::Add(a, b, mode), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), out)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out)
    }

    /// Natural log; non-positive inputs are a numeric error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), out)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, cols) = self.value(a).dims2()?;
        let mut out = self.value(a).clone();
        out.data_mut().chunks_mut(cols).for_each(softmax_in_place);
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(structural!("mean of an empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// `[n, m] -> [n, 1]` row sums.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.value(a).dims2()?;
        let data = self.value(a).data().chunks(m.max(1)).map(|r| r.iter().sum()).collect();
        let data = if m == 0 { vec![0.0; n] } else { data };
        self.push(Op::RowSum(a), Tensor::new([n, 1], data)?)
    }

    /// `[n, m] -> [n, 1]` row means.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.value(a).dims2()?;
        if m == 0 {
            return Err(structural!("row mean over zero columns"));
        }
        let data = self
            .value(a)
            .data()
            .chunks(m)
            .map(|r| r.iter().sum::<f64>() / m as f64)
            .collect();
        self.push(Op::RowMean(a), Tensor::new([n, 1], data)?)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| structural!("concat of nothing"))?;
        let (n, _) = self.value(first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != n {
                return Err(structural!("concat rows {r} vs {n}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::new([n, total], data)?)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = self.value(a).dims2()?;
        if start > end || end > m {
            return Err(structural!("slice {start}..{end} of {m} columns"));
        }
        let w = end - start;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(n * w);
        for i in 0..n {
            data.extend_from_slice(&src[i * m + start..i * m + end]);
        }
        self.push(Op::SliceCols(a, start), Tensor::new([n, w], data)?)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(Op::Reshape(a), out)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        if av.is_empty() {
            return Err(structural!("mse of empty tensors"));
        }
        let s = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / av.len() as f64;
        self.push(Op::Mse(a, b), Tensor::scalar(s))
    }

    /// Mean binary cross-entropy of probabilities `p` against fixed targets.
    /// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` first.
    pub fn bce(&mut self, p: Var, targets: Tensor) -> Result<Var> {
        let pv = self.value(p);
        if pv.numel() != targets.numel() || pv.numel() == 0 {
            return Err(structural!(
                "bce with {} probabilities and {} targets",
                pv.numel(),
                targets.numel()
            ));
        }
        let s = pv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &t)| {
                let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / pv.numel() as f64;
        self.push(Op::Bce(p, targets), Tensor::scalar(s))
    }

    /// Per-sample cross-entropy of `[n, c]` logits against class labels,
    /// computed through a stable log-softmax. Output shape `[n]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = self.value(logits).dims2()?;
        if labels.len() != n {
            return Err(structural!("{} labels for {n} rows", labels.len()));
        }
        let lv = self.value(logits).data();
        let mut out = Vec::with_capacity(n);
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(structural!("label {y} out of range for {c} classes"));
            }
            let row = &lv[i * c..(i + 1) * c];
            out.push(log_sum_exp(row) - row[y]);
        }
        self.push(Op::CrossEntropy(logits, labels.to_vec()), Tensor::vector(out))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + STANDARDIZE_EPS)`.
    pub fn standardize_rows(&mut self, a: Var) -> Result<Var> {
        let (_, m) = self.value(a).dims2()?;
        if m == 0 {
            return Err(structural!("standardize over zero columns"));
        }
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(m) {
            let (mean, inv_std) = row_moments(row);
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv_std);
        }
        self.push(Op::StandardizeRows(a), out)
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(structural!("{what} {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(structural!(
                "backward from non-scalar node of shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut seed = self.value(loss).zeros_like();
        seed.data_mut()[0] = 1.0;
        grads[loss.0] = Some(seed);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            self.backprop_node(node, &gout, &mut grads)?;
            grads[id] = Some(gout);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            let trainable_leaf = node.requires_grad && matches!(node.op, Op::Leaf);
            if trainable_leaf && grads[id].is_none() {
                grads[id] = Some(node.value.zeros_like());
            } else if !trainable_leaf && id != loss.0 {
                grads[id] = None;
            }
        }
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient at node {id}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let (_, n) = self.value(*b).dims2()?;
                if self.needs(*a) {
                    let slot = self.slot(grads, *a);
                    gemm(gd, false, self.value(*b).data(), true, m, n, k, slot.data_mut(), true);
                }
                if self.needs(*b) {
                    let slot = self.slot(grads, *b);
                    gemm(self.value(*a).data(), true, gd, false, k, m, n, slot.data_mut(), true);
                }
            }
            Op::Add(a, b, mode) => {
                self.accumulate(grads, *a, |d, _| d.iter_mut().zip(gd).for_each(|(d, g)| *d += g));
                if self.needs(*b) {
                    let slot = self.slot(grads, *b);
                    let d = slot.data_mut();
                    match mode {
                        Broadcast::Same => d.iter_mut().zip(gd).for_each(|(d, g)| *d += g),
                        Broadcast::Row => {
                            let cols = d.len();
                            for row in gd.chunks(cols) {
                                d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                            }
                        }
                        Broadcast::Scalar => d[0] += gd.iter().sum::<f64>(),
                    }
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |d, _| d.iter_mut().zip(gd).for_each(|(d, g)| *d += g));
                self.accumulate(grads, *b, |d, _| d.iter_mut().zip(gd).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |d, _| {
                    for ((d, g), bv) in d.iter_mut().zip(gd).zip(bv) {
                        *d += g * bv;
                    }
                });
                self.accumulate(grads, *b, |d, _| {
                    for ((d, g), av) in d.iter_mut().zip(gd).zip(av) {
                        *d += g * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |d, _| d.iter_mut().zip(gd).for_each(|(d, g)| *d += c * g));
            }
            Op::AddConst(a) | Op::Reshape(a) => {
                self.accumulate(grads, *a, |d, _| d.iter_mut().zip(gd).for_each(|(d, g)| *d += g));
            }
            Op::Relu(a) => self.accumulate(grads, *a, |d, x| {
                for ((d, g), x) in d.iter_mut().zip(gd).zip(x) {
                    if *x > 0.0 {
                        *d += g;
                    }
                }
            }),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |d, _| {
                for ((d, g), s) in d.iter_mut().zip(gd).zip(y) {
                    *d += g * s * (1.0 - s);
                }
            }),
            Op::Tanh(a) => self.accumulate(grads, *a, |d, _| {
                for ((d, g), t) in d.iter_mut().zip(gd).zip(y) {
                    *d += g * (1.0 - t * t);
                }
            }),
            Op::Exp(a) => self.accumulate(grads, *a, |d, _| {
                for ((d, g), e) in d.iter_mut().zip(gd).zip(y) {
                    *d += g * e;
                }
            }),
            Op::Log(a) => self.accumulate(grads, *a, |d, x| {
                for ((d, g), x) in d.iter_mut().zip(gd).zip(x) {
                    *d += g / x;
                }
            }),
            Op::Abs(a) => self.accumulate(grads, *a, |d, x| {
                for ((d, g), x) in d.iter_mut().zip(gd).zip(x) {
                    *d += g * sign(*x);
                }
            }),
            Op::Clamp(a, lo, hi) => self.accumulate(grads, *a, |d, x| {
                for ((d, g), x) in d.iter_mut().zip(gd).zip(x) {
                    if x >= lo && x <= hi {
                        *d += g;
                    }
                }
            }),
            Op::SoftmaxRows(a) => {
                let cols = node.value.shape()[1];
                self.accumulate(grads, *a, |d, _| {
                    for ((d, g), s) in d.chunks_mut(cols).zip(gd.chunks(cols)).zip(y.chunks(cols)) {
                        let dot: f64 = g.iter().zip(s).map(|(g, s)| g * s).sum();
                        for ((d, g), s) in d.iter_mut().zip(g).zip(s) {
                            *d += s * (g - dot);
                        }
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |d, _| d.iter_mut().for_each(|d| *d += gd[0])),
            Op::Mean(a) => self.accumulate(grads, *a, |d, _| {
                let s = gd[0] / d.len() as f64;
                d.iter_mut().for_each(|d| *d += s);
            }),
            Op::RowSum(a) | Op::RowMean(a) => {
                let m = self.shape(*a)[1];
                let scale = if matches!(node.op, Op::RowMean(_)) { 1.0 / m as f64 } else { 1.0 };
                self.accumulate(grads, *a, |d, _| {
                    for (row, g) in d.chunks_mut(m).zip(gd) {
                        row.iter_mut().for_each(|d| *d += g * scale);
                    }
                });
            }
            Op::Concat(parts) => {
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    self.accumulate(grads, p, |d, _| {
                        for (drow, grow) in d.chunks_mut(w.max(1)).zip(gd.chunks(total)) {
                            drow.iter_mut()
                                .zip(&grow[offset..offset + w])
                                .for_each(|(d, g)| *d += g);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let m = self.shape(*a)[1];
                let w = node.value.shape()[1];
                self.accumulate(grads, *a, |d, _| {
                    for (drow, grow) in d.chunks_mut(m).zip(gd.chunks(w.max(1))) {
                        drow[*start..*start + w].iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                    }
                });
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let s = 2.0 * gd[0] / av.len() as f64;
                self.accumulate(grads, *a, |d, _| {
                    for ((d, x), y) in d.iter_mut().zip(av).zip(bv) {
                        *d += s * (x - y);
                    }
                });
                self.accumulate(grads, *b, |d, _| {
                    for ((d, x), y) in d.iter_mut().zip(av).zip(bv) {
                        *d -= s * (x - y);
                    }
                });
            }
            Op::Bce(p, t) => {
                let n = t.numel() as f64;
                self.accumulate(grads, *p, |d, pv| {
                    for ((d, &p), &t) in d.iter_mut().zip(pv).zip(t.data()) {
                        if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            *d += gd[0] * (-(t / p) + (1.0 - t) / (1.0 - p)) / n;
                        }
                    }
                });
            }
            Op::CrossEntropy(logits, labels) => {
                let c = self.shape(*logits)[1];
                self.accumulate(grads, *logits, |d, lv| {
                    for (i, &label) in labels.iter().enumerate() {
                        let mut probs = lv[i * c..(i + 1) * c].to_vec();
                        softmax_in_place(&mut probs);
                        probs[label] -= 1.0;
                        for (d, p) in d[i * c..(i + 1) * c].iter_mut().zip(probs) {
                            *d += gd[i] * p;
                        }
                    }
                });
            }
            Op::StandardizeRows(a) => {
                let m = self.shape(*a)[1];
                self.accumulate(grads, *a, |d, x| {
                    for ((drow, grow), (xrow, yrow)) in d
                        .chunks_mut(m)
                        .zip(gd.chunks(m))
                        .zip(x.chunks(m).zip(y.chunks(m)))
                    {
                        let (_, inv_std) = row_moments(xrow);
                        let g_mean = grow.iter().sum::<f64>() / m as f64;
                        let gy_mean = grow.iter().zip(yrow).map(|(g, y)| g * y).sum::<f64>() / m as f64;
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += inv_std * (g - g_mean - y * gy_mean);
                        }
                    }
                });
            }
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut Tensor {
        grads[v.0].get_or_insert_with(|| self.nodes[v.0].value.zeros_like())
    }

    /// Runs `f(grad_slot, input_value)` when `v` needs a gradient.
    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64], &[f64])) {
        if self.needs(v) {
            let x = self.nodes[v.0].value.data();
            let slot = grads[v.0].get_or_insert_with(|| self.nodes[v.0].value.zeros_like());
            f(slot.data_mut(), x);
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked by caller")
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let m = row.len() as f64;
    let mean = row.iter().sum::<f64>() / m;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
    (mean, 1.0 / (var + STANDARDIZE_EPS).sqrt())
}
