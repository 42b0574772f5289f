//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Operations are appended to the tape in execution order, so the tape is
//! already topologically sorted; [`Tape::backward`] walks it once from the
//! loss node back to the leaves. Leaves are either tracked parameters or
//! constants, and gradients only flow through nodes that depend on a tracked
//! leaf.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::tensor::{dropout_mask, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of differentiable operations.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    MatMul,
    Transpose,
    Add,
    Sub,
    /// Elementwise product of two tape values.
    Mul,
    Scale(f64),
    AddScalar(f64),
    Relu,
    /// Same kernel as `Relu`; kept separate so hinge terms read as such.
    MaxWithZero,
    Tanh,
    Exp,
    Log,
    Dot,
    L2Norm,
    Softmax,
    LogSoftmax,
    ConcatRows,
    MeanRows,
    SumAll,
    SumCols,
    AddRow,
    SubCol,
    SliceRows {
        start: usize,
        len: usize,
    },
    GatherRows(Vec<usize>),
    /// Elementwise product with a constant (e.g. a dropout mask or a weight mask).
    DropoutMaskApply(Tensor),
}

#[derive(Debug, Clone)]
enum NodeKind {
    Param,
    Constant,
    Op(OpKind, Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    kind: NodeKind,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward pass; indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        match self.grads.get(var.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let s = self.shapes[var.0];
                Tensor::zeros(s.rows, s.cols)
            }
        }
    }

    pub fn touched(&self, var: Var) -> bool {
        matches!(self.grads.get(var.0), Some(Some(_)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, kind: NodeKind, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, kind, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, NodeKind::Param, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, NodeKind::Constant, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Evaluates `kind` on `inputs` and records the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = match &kind {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Dot | OpKind::AddRow | OpKind::SubCol => Some(2),
            OpKind::ConcatRows => None,
            _ => Some(1),
        };
        if let Some(n) = arity {
            if inputs.len() != n {
                return Err(contract!("{kind:?} takes {n} inputs, got {}", inputs.len()));
            }
        } else if inputs.is_empty() {
            return Err(contract!("concat_rows needs at least one input"));
        }
        let v = |i: usize| &self.nodes[inputs[i].0].value;
        let value = match &kind {
            OpKind::MatMul => v(0).matmul(v(1))?,
            OpKind::Transpose => v(0).transpose(),
            OpKind::Add => v(0).add(v(1))?,
            OpKind::Sub => v(0).sub(v(1))?,
            OpKind::Mul => v(0).mul(v(1))?,
            OpKind::Scale(c) => v(0).scale(*c)?,
            OpKind::AddScalar(c) => v(0).add_scalar(*c)?,
            OpKind::Relu | OpKind::MaxWithZero => v(0).relu()?,
            OpKind::Tanh => v(0).tanh()?,
            OpKind::Exp => v(0).exp()?,
            OpKind::Log => v(0).log()?,
            OpKind::Dot => v(0).dot(v(1))?,
            OpKind::L2Norm => v(0).l2_norm()?,
            OpKind::Softmax => v(0).softmax_rows()?,
            OpKind::LogSoftmax => v(0).log_softmax_rows()?,
            OpKind::ConcatRows => {
                let parts: Vec<&Tensor> = inputs.iter().map(|x| &self.nodes[x.0].value).collect();
                Tensor::concat_rows(&parts)?
            }
            OpKind::MeanRows => v(0).mean_rows()?,
            OpKind::SumAll => v(0).sum_all()?,
            OpKind::SumCols => v(0).sum_cols()?,
            OpKind::AddRow => v(0).add_row(v(1))?,
            OpKind::SubCol => v(0).sub_col(v(1))?,
            OpKind::SliceRows { start, len } => v(0).slice_rows(*start, *len)?,
            OpKind::GatherRows(idx) => v(0).gather_rows(idx)?,
            OpKind::DropoutMaskApply(mask) => v(0).mul(mask)?,
        };
        let requires_grad = inputs.iter().any(|x| self.nodes[x.0].requires_grad);
        Ok(self.push(value, NodeKind::Op(kind, inputs.to_vec()), requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::Scale(c), &[a])
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::AddScalar(c), &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }
    pub fn max_with_zero(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::MaxWithZero, &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Dot, &[a, b])
    }
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::L2Norm, &[a])
    }
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softmax, &[a])
    }
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSoftmax, &[a])
    }
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::ConcatRows, parts)
    }
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::MeanRows, &[a])
    }
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumAll, &[a])
    }
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumCols, &[a])
    }
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.apply(OpKind::AddRow, &[a, row])
    }
    pub fn sub_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.apply(OpKind::SubCol, &[a, col])
    }
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::SliceRows { start, len }, &[a])
    }
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::GatherRows(idx), &[a])
    }
    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        self.apply(OpKind::DropoutMaskApply(c), &[a])
    }

    /// Inverted dropout with a mask drawn from `rng`; a zero rate records nothing.
    pub fn dropout<R: rand::Rng + ?Sized>(&mut self, a: Var, drop_rate: f64, rng: &mut R) -> Result<Var> {
        if drop_rate == 0.0 {
            return Ok(a);
        }
        let mask = dropout_mask(self.value(a).shape(), drop_rate, rng)?;
        self.mul_const(a, mask)
    }

    /// Back-propagates from a scalar `loss` to every node on the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let out = &self.nodes[loss.0].value;
        if !out.is_scalar() {
            return Err(contract!("backward needs a scalar loss, got shape {}", out.shape()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let NodeKind::Op(kind, inputs) = &node.kind else { continue };
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.local_grads(kind, inputs, &node.value, &g)?;
            // Keep the node's own gradient readable after propagation.
            grads[idx] = Some(g);
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0].take() {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() })
    }

    fn local_grads(&self, kind: &OpKind, inputs: &[Var], out: &Tensor, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let x = |i: usize| &self.nodes[inputs[i].0].value;
        let needs = |i: usize| self.nodes[inputs[i].0].requires_grad;
        let grads = match kind {
            OpKind::MatMul => {
                let da = if needs(0) { Some(g.matmul(&x(1).transpose())?) } else { None };
                let db = if needs(1) { Some(x(0).transpose().matmul(g)?) } else { None };
                vec![da, db]
            }
            OpKind::Transpose => vec![Some(g.transpose())],
            OpKind::Add => vec![Some(g.clone()), Some(g.clone())],
            OpKind::Sub => vec![Some(g.clone()), Some(g.scale(-1.0)?)],
            OpKind::Mul => vec![Some(g.mul(x(1))?), Some(g.mul(x(0))?)],
            OpKind::Scale(c) => vec![Some(g.scale(*c)?)],
            OpKind::AddScalar(_) => vec![Some(g.clone())],
            OpKind::Relu | OpKind::MaxWithZero => {
                let data = g.data().iter().zip(x(0).data()).map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 }).collect();
                vec![Some(Tensor::from_parts(g.shape(), data))]
            }
            OpKind::Tanh => {
                let data = g.data().iter().zip(out.data()).map(|(&gi, &yi)| gi * (1.0 - yi * yi)).collect();
                vec![Some(Tensor::from_parts(g.shape(), data))]
            }
            OpKind::Exp => vec![Some(g.mul(out)?)],
            OpKind::Log => {
                let data = g.data().iter().zip(x(0).data()).map(|(&gi, &xi)| gi / xi).collect();
                vec![Some(Tensor::new(g.rows(), g.cols(), data)?)]
            }
            OpKind::Dot => {
                let s = g.item()?;
                vec![Some(x(1).scale(s)?), Some(x(0).scale(s)?)]
            }
            OpKind::L2Norm => {
                let norm = out.item()?;
                let s = g.item()?;
                if norm == 0.0 {
                    vec![Some(Tensor::zeros(x(0).rows(), x(0).cols()))]
                } else {
                    vec![Some(x(0).scale(s / norm)?)]
                }
            }
            OpKind::Softmax => {
                let c = out.cols();
                let mut data = Vec::with_capacity(out.data().len());
                for i in 0..out.rows() {
                    let (y, gr) = (out.row(i), g.row(i));
                    let inner: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    data.extend((0..c).map(|j| y[j] * (gr[j] - inner)));
                }
                vec![Some(Tensor::new(out.rows(), c, data)?)]
            }
            OpKind::LogSoftmax => {
                let c = out.cols();
                let mut data = Vec::with_capacity(out.data().len());
                for i in 0..out.rows() {
                    let (ly, gr) = (out.row(i), g.row(i));
                    let total: f64 = gr.iter().sum();
                    data.extend((0..c).map(|j| gr[j] - libm::exp(ly[j]) * total));
                }
                vec![Some(Tensor::new(out.rows(), c, data)?)]
            }
            OpKind::ConcatRows => {
                let mut start = 0;
                let mut parts = Vec::with_capacity(inputs.len());
                for i in 0..inputs.len() {
                    let r = x(i).rows();
                    parts.push(Some(g.slice_rows(start, r)?));
                    start += r;
                }
                parts
            }
            OpKind::MeanRows => {
                let r = x(0).rows();
                let row = g.scale(1.0 / r as f64)?;
                let data = (0..r).flat_map(|_| row.data().iter().copied()).collect();
                vec![Some(Tensor::from_parts(x(0).shape(), data))]
            }
            OpKind::SumAll => {
                let s = g.item()?;
                vec![Some(Tensor::full(x(0).rows(), x(0).cols(), s))]
            }
            OpKind::SumCols => {
                let (r, c) = (x(0).rows(), x(0).cols());
                let data = (0..r * c).map(|k| g.data()[k / c]).collect();
                vec![Some(Tensor::from_parts(x(0).shape(), data))]
            }
            OpKind::AddRow => {
                let col_sums = g.transpose().sum_cols()?.transpose();
                vec![Some(g.clone()), Some(col_sums)]
            }
            OpKind::SubCol => vec![Some(g.clone()), Some(g.sum_cols()?.scale(-1.0)?)],
            OpKind::SliceRows { start, len } => {
                let src = x(0);
                let c = src.cols();
                let mut data = vec![0.0; src.data().len()];
                data[start * c..(start + len) * c].copy_from_slice(g.data());
                vec![Some(Tensor::from_parts(src.shape(), data))]
            }
            OpKind::GatherRows(idx) => {
                let src = x(0);
                let c = src.cols();
                let mut data = vec![0.0; src.data().len()];
                for (k, &i) in idx.iter().enumerate() {
                    for (d, s) in data[i * c..(i + 1) * c].iter_mut().zip(g.row(k)) {
                        *d += s;
                    }
                }
                vec![Some(Tensor::from_parts(src.shape(), data))]
            }
            OpKind::DropoutMaskApply(mask) => vec![Some(g.mul(mask)?)],
        };
        Ok(grads)
    }
}
