//! Reverse-mode tape covering exactly the operations the verdict heads use.
//!
//! A tape lives for one forward pass. Node values are reference-counted so
//! parameter leaves do not copy their weights.

use std::sync::Arc;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    /// broadcast a `1×c` row over every row of the left operand
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    /// row-wise softmax; masked columns carry probability 0 and so receive no gradient
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    /// constant matrix times variable
    ConstLeftMul(Arc<Tensor>, Var),
    /// `-ln(p[target])` of a `1×C` distribution
    CrossEntropy(Var, usize),
}

struct Node {
    op: Op,
    value: Arc<Tensor>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.push_shared(op, Arc::new(value))
    }

    fn push_shared(&mut self, op: Op, value: Arc<Tensor>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
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

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn leaf_shared(&mut self, t: Arc<Tensor>) -> Var {
        self.push_shared(Op::Leaf, t)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push_shared(Op::Param(id), store.get(id).shared())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(Op::MatMulT(a, b), out))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::shape(format!(
                "cannot broadcast {:?} over {:?}",
                r.shape(),
                x.shape()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for j in 0..out.cols() {
                out.set(i, j, out.get(i, j) + r.get(0, j));
            }
        }
        Ok(self.push(Op::AddRow(a, row), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a), None);
        self.push(Op::Softmax(a), out)
    }

    /// Softmax over the columns whose mask entry is `true`; masked columns get 0.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.cols() {
            return Err(Error::shape(format!("mask of {} for {} columns", mask.len(), x.cols())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("softmax mask excludes every column"));
        }
        let out = softmax_rows(x, Some(mask));
        Ok(self.push(Op::Softmax(a), out))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::shape("concat_cols row mismatch"));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let cols = self.value(*first).cols();
        if parts.iter().any(|p| self.value(*p).cols() != cols) {
            return Err(Error::shape("concat_rows column mismatch"));
        }
        let data: Vec<f64> = parts.iter().flat_map(|p| self.value(*p).data().to_vec()).collect();
        let rows = data.len() / cols;
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(x.row_slice(r)) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        out.data_mut().iter_mut().for_each(|o| *o /= n);
        self.push(Op::MeanRows(a), out)
    }

    pub fn const_left_mul(&mut self, m: Arc<Tensor>, a: Var) -> Result<Var> {
        let out = m.matmul(self.value(a))?;
        Ok(self.push(Op::ConstLeftMul(m, a), out))
    }

    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.value(probs);
        if p.rows() != 1 || target >= p.cols() {
            return Err(Error::invalid(format!(
                "target {target} for distribution of shape {:?}",
                p.shape()
            )));
        }
        let loss = -p.get(0, target).ln();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "cross-entropy: p[{target}] = {}",
                p.get(0, target)
            )));
        }
        Ok(self.push(Op::CrossEntropy(probs, target), Tensor::scalar(loss)))
    }

    /// Back-propagates from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != [1, 1] {
            return Err(Error::shape("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            // interior gradients are consumed here; leaves keep theirs
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMulT(a, b) => {
                    // y = a bᵀ: dA = g b, dB = gᵀ a
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::AddRow(a, row) => {
                    let mut gr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *row, gr)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone())?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    for (gv, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s))?,
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, yr[c] * (gr[c] - inner));
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.value(*p).cols();
                        let mut gp = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            for c in 0..pc {
                                gp.set(r, c, g.get(r, offset + c));
                            }
                        }
                        offset += pc;
                        accumulate(&mut grads, *p, gp)?;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pr = self.value(*p).rows();
                        let cols = g.cols();
                        let gp = Tensor::new(pr, cols, g.data()[offset * cols..(offset + pr) * cols].to_vec())?;
                        offset += pr;
                        accumulate(&mut grads, *p, gp)?;
                    }
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let n = x.rows() as f64;
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        for c in 0..x.cols() {
                            ga.set(r, c, g.get(0, c) / n);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConstLeftMul(m, a) => {
                    let ga = m.t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::CrossEntropy(probs, target) => {
                    let p = self.value(*probs);
                    let mut gp = Tensor::zeros(1, p.cols());
                    gp.set(0, *target, -g.as_scalar() / p.get(0, *target));
                    accumulate(&mut grads, *probs, gp)?;
                }
            }
        }
        Ok(Gradients {
            grads,
            params: self
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(i, n)| match n.op {
                    Op::Param(id) => Some((i, id)),
                    _ => None,
                })
                .collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

pub(crate) fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row_slice(r);
        let keep = |c: usize| mask.is_none_or(|m| m[c]);
        let max = (0..row.len())
            .filter(|&c| keep(c))
            .map(|c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (c, &v) in row.iter().enumerate() {
            if keep(c) {
                let e = (v - max).exp();
                out.set(r, c, e);
                z += e;
            }
        }
        for c in 0..row.len() {
            out.set(r, c, out.get(r, c) / z);
        }
    }
    out
}

/// Per-node gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// One gradient per parameter in `store` (zeros for parameters the tape did not touch).
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value().rows(), p.value().cols()))
            .collect();
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[id.index()]
                    .add_assign(g)
                    .expect("parameter gradient shape");
            }
        }
        out
    }
}
