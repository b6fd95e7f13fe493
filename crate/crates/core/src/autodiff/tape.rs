//! Tape-based reverse-mode differentiation over dense f64 tensors.
//!
//! Every op appends a node to the [`Tape`] and returns a [`Var`] handle. Node
//! ids increase monotonically, so reverse id order is a valid topological
//! order for [`Tape::backward`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::PatternStack;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Silu(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d { x: Var, w: Var, b: Option<Var>, kernel: usize, stride: usize, cols: Vec<f64> },
    GroupNorm { x: Var, gain: Var, bias: Var, groups: usize, mean: Vec<f64>, rstd: Vec<f64> },
    BatchNorm { x: Var, gain: Var, bias: Var, mean: Vec<f64>, rstd: Vec<f64> },
    Upsample2x(Var),
    ConcatChannels(Var, Var),
    ToTokens(Var),
    FromTokens(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    SoftmaxRows(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Project { x: Var, patterns: Arc<PatternStack> },
}

/// One node: value, shape, optional gradient.
#[derive(Debug, Clone)]
pub struct DiffTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    needs_grad: bool,
    pub(crate) op: Op,
}

impl DiffTensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<DiffTensor>,
}

pub(crate) struct Grads(Vec<Option<Vec<f64>>>);

impl Grads {
    pub(crate) fn slot(&mut self, v: Var, len: usize) -> &mut [f64] {
        self.0[v.0].get_or_insert_with(|| vec![0.0; len])
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn leaf_node(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} holds {} values, got {}", numel(shape), data.len())));
        }
        self.nodes.push(DiffTensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad,
            needs_grad: requires_grad,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input: receives a gradient from [`Tape::backward`].
    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.leaf_node(shape, data, true)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.leaf_node(shape, data, false)
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(DiffTensor { shape, data, grad: None, requires_grad: false, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn tensor(&self, v: Var) -> &DiffTensor {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].data[0]
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Reverse sweep from a scalar `loss`. Afterwards every node that depends
    /// on a trainable leaf (including the leaves) holds its gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::ContractViolation(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let mut grads = Grads(vec![None; self.nodes.len()]);
        grads.0[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads.0[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads.0[i] = Some(g);
        }
        for (n, g) in self.nodes.iter_mut().zip(grads.0) {
            if n.needs_grad {
                n.grad = Some(g.unwrap_or_else(|| vec![0.0; n.data.len()]));
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut Grads) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| add_into(d, g));
                self.acc(grads, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| add_into(d, g));
                self.acc(grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * bv[j];
                    }
                });
                self.acc(grads, *b, |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * av[j];
                    }
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += s * g)),
            Op::Offset(a) | Op::Reshape(a) => self.acc(grads, *a, |d| add_into(d, g)),
            Op::Silu(a) => {
                let x = self.value(*a);
                self.acc(grads, *a, |d| {
                    for j in 0..d.len() {
                        let s = sigmoid(x[j]);
                        d[j] += g[j] * s * (1.0 + x[j] * (1.0 - s));
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.data;
                self.acc(grads, *a, |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                });
            }
            Op::Sum(a) => self.acc(grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.acc(grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::Conv2d { x, w, b, kernel, stride, cols } => {
                super::conv::conv2d_backward(self, node, *x, *w, *b, *kernel, *stride, cols, g, grads)
            }
            Op::GroupNorm { x, gain, bias, groups, mean, rstd } => {
                super::norm::group_norm_backward(self, *x, *gain, *bias, *groups, mean, rstd, g, grads)
            }
            Op::BatchNorm { x, gain, bias, mean, rstd } => {
                super::norm::batch_norm_backward(self, *x, *gain, *bias, mean, rstd, g, grads)
            }
            Op::Upsample2x(x) => super::conv::upsample_backward(self, *x, g, grads),
            Op::ConcatChannels(a, b) => super::ops::concat_channels_backward(self, *a, *b, g, grads),
            Op::ToTokens(x) => super::ops::to_tokens_backward(self, *x, g, grads),
            Op::FromTokens(t) => super::ops::from_tokens_backward(self, *t, node, g, grads),
            Op::Linear { x, w, b } => super::ops::linear_backward(self, *x, *w, *b, g, grads),
            Op::MatMul(a, b) => super::ops::matmul_backward(self, *a, *b, g, grads),
            Op::MatMulNt(a, b) => super::ops::matmul_nt_backward(self, *a, *b, g, grads),
            Op::SoftmaxRows(x) => super::ops::softmax_backward(self, *x, node, g, grads),
            Op::SliceCols { x, start } => super::ops::slice_cols_backward(self, *x, *start, node, g, grads),
            Op::ConcatCols(parts) => super::ops::concat_cols_backward(self, parts, g, grads),
            Op::Project { x, patterns } => self.acc(grads, *x, |d| add_into(d, &patterns.apply_adjoint(g))),
        }
    }

    /// Runs `f` on the gradient slot of `v` if `v` participates in the sweep.
    pub(crate) fn acc(&self, grads: &mut Grads, v: Var, f: impl FnOnce(&mut [f64])) {
        if self.nodes[v.0].needs_grad {
            f(grads.slot(v, self.nodes[v.0].data.len()));
        }
    }
}

pub(crate) fn add_into(d: &mut [f64], g: &[f64]) {
    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
