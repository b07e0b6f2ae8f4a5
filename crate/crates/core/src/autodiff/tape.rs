//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`GradTape`] records every primitive in execution order, so the node
//! list is already a topological order. [`GradTape::grad`] walks it backwards
//! once, accumulating adjoints, and returns the gradient for every parameter
//! leaf that the loss depends on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifies a trainable parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    Ln(NodeId),
    Recip(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    StopGradient(NodeId),
    Sum(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::ScaleBy(..) => "scale_by",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Elu(_) => "elu",
            Op::Ln(_) => "ln",
            Op::Recip(_) => "recip",
            Op::Square(_) => "square",
            Op::Clamp(..) => "clamp",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::StopGradient(_) => "stop_gradient",
            Op::Sum(_) => "sum",
        }
    }
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ScaleBy(a, b) => {
                vec![*a, *b]
            }
            Op::Affine(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Elu(a)
            | Op::Ln(a)
            | Op::Recip(a)
            | Op::Square(a)
            | Op::Clamp(a, ..)
            | Op::SliceCols(a, _)
            | Op::StopGradient(a)
            | Op::Sum(a) => vec![*a],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by parameter.
pub type Gradients = BTreeMap<ParamId, Tensor>;

/// Ordered record of primitive ops.
#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True when every recorded op refers only to earlier nodes.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.inputs().iter().all(|inp| inp.0 < i))
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                node: id,
                op: op.name(),
            });
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(id))
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Constant)
    }

    /// Records a trainable leaf. The same `ParamId` may be recorded more than
    /// once; gradients from every occurrence are summed.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.matmul(vb);
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let n = va.cols();
        let mut out = va.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += vr.data()[i % n];
        }
        self.push(out, Op::AddRow(a, row))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(shape_err(name, va, vb));
        }
        let out = va.zip_map(vb, f);
        self.push(out, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: NodeId, scale: f64) -> Result<NodeId> {
        self.affine(a, scale, 0.0)
    }

    /// Multiplies every entry of `a` by the `1 x 1` node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let (va, vs) = (self.value(a), self.value(s));
        if vs.len() != 1 {
            return Err(shape_err("scale_by", va, vs));
        }
        let k = vs.item();
        let out = va.map(|x| x * k);
        self.push(out, Op::ScaleBy(a, s))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn elu(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(elu);
        self.push(out, Op::Elu(a))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(f64::recip);
        self.push(out, Op::Recip(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero wherever clamping bites.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape {
                op: "concat_cols",
                detail: "no inputs".into(),
            });
        };
        let rows = self.value(first).rows();
        if let Some(bad) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(shape_err("concat_cols", self.value(first), self.value(*bad)));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                let c = v.cols();
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let va = self.value(a);
        let c = va.cols();
        if start >= end || end > c {
            return Err(Error::Shape {
                op: "slice_cols",
                detail: format!("range {start}..{end} out of {c} columns"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(va.rows() * w);
        for r in 0..va.rows() {
            data.extend_from_slice(&va.data()[r * c + start..r * c + end]);
        }
        let out = Tensor::matrix(va.rows(), w, data)?;
        self.push(out, Op::SliceCols(a, start))
    }

    /// Identity on the forward pass; passes no adjoint backwards.
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).clone();
        self.push(out, Op::StopGradient(a))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Adjoints of the leaf and stop-gradient nodes reachable backwards from
    /// `loss`; interior adjoints are consumed during the sweep.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "gradient requested for non-scalar node of shape {:?}",
                lv.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::ones(lv.rows(), lv.cols()));

        fn acc(adj: &mut [Option<Tensor>], node: NodeId, g: Tensor) {
            match &mut adj[node.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    node: idx,
                    op: node.op.name(),
                });
            }
            let out = &node.value;
            match &node.op {
                Op::Constant | Op::Param(_) | Op::StopGradient(_) => {
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let n = g.cols();
                    let mut gr = vec![0.0; n];
                    for (i, v) in g.data().iter().enumerate() {
                        gr[i % n] += v;
                    }
                    acc(&mut adj, *row, Tensor::matrix(1, n, gr)?);
                    acc(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.map(|v| -v));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Affine(a, s) => acc(&mut adj, *a, g.map(|v| v * s)),
                Op::ScaleBy(a, s) => {
                    let k = self.value(*s).item();
                    let gs = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                    acc(&mut adj, *s, Tensor::scalar(gs));
                    acc(&mut adj, *a, g.map(|v| v * k));
                }
                Op::Sigmoid(a) => acc(&mut adj, *a, g.zip_map(out, |v, y| v * y * (1.0 - y))),
                Op::Tanh(a) => acc(&mut adj, *a, g.zip_map(out, |v, y| v * (1.0 - y * y))),
                Op::Elu(a) => {
                    let ga = g.zip_map(self.value(*a), |v, x| if x > 0.0 { v } else { v * x.exp() });
                    acc(&mut adj, *a, ga);
                }
                Op::Ln(a) => acc(&mut adj, *a, g.zip_map(self.value(*a), |v, x| v / x)),
                Op::Recip(a) => acc(&mut adj, *a, g.zip_map(out, |v, y| -v * y * y)),
                Op::Square(a) => acc(&mut adj, *a, g.zip_map(self.value(*a), |v, x| 2.0 * v * x)),
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(*a), |v, x| if x >= *lo && x <= *hi { v } else { 0.0 });
                    acc(&mut adj, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        let mut data = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        acc(&mut adj, *p, Tensor::matrix(rows, c, data)?);
                        offset += c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let (rows, c, w) = (va.rows(), va.cols(), g.cols());
                    let mut ga = Tensor::zeros(rows, c);
                    for r in 0..rows {
                        ga.data_mut()[r * c + start..r * c + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let va = self.value(*a);
                    acc(&mut adj, *a, Tensor::full(va.rows(), va.cols(), g.item()));
                }
            }
        }
        Ok(adj)
    }

    /// `∂loss/∂param` for every parameter leaf the loss depends on.
    pub fn grad(&self, loss: NodeId) -> Result<Gradients> {
        let adj = self.backward(loss)?;
        let mut grads = Gradients::new();
        for (idx, g) in adj.into_iter().enumerate() {
            if let (Some(g), Op::Param(id)) = (g, &self.nodes[idx].op) {
                match grads.get_mut(id) {
                    Some(t) => t.add_assign(&g),
                    None => {
                        grads.insert(*id, g);
                    }
                }
            }
        }
        Ok(grads)
    }
}
