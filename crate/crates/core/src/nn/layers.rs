use std::sync::Arc;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `y = xW + b` with `b` broadcast over rows.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// `softmax(QKᵀ/√d)V`. `key_mask`, when given, excludes the `false` key rows
/// from every attention distribution.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    let (qd, kd) = (tape.value(q).cols(), tape.value(k).cols());
    if qd != kd {
        return Err(Error::shape(format!("query dim {qd} vs key dim {kd}")));
    }
    let (nk, nv) = (tape.value(k).rows(), tape.value(v).rows());
    if nk != nv {
        return Err(Error::shape(format!("{nk} keys vs {nv} values")));
    }
    let scores = tape.matmul_t(q, k)?;
    let scaled = tape.scale(scores, 1.0 / (qd as f64).sqrt());
    let weights = match key_mask {
        Some(mask) => tape.masked_softmax(scaled, mask)?,
        None => tape.softmax(scaled),
    };
    tape.matmul(weights, v)
}

/// `D̂^{-1/2}(A + I)D̂^{-1/2}` for a symmetric 0/1 adjacency without self-loops.
pub fn normalized_adjacency(adjacency: &Tensor) -> Result<Tensor> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::shape(format!("adjacency must be square, got {:?}", adjacency.shape())));
    }
    for i in 0..n {
        if adjacency.get(i, i) != 0.0 {
            return Err(Error::invalid(format!("adjacency has a self-loop at node {i}")));
        }
        for j in 0..i {
            if adjacency.get(i, j) != adjacency.get(j, i) {
                return Err(Error::invalid(format!("adjacency not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a_hat = adjacency.clone();
    for i in 0..n {
        a_hat.set(i, i, 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a_hat.row_slice(i).iter().sum::<f64>().sqrt())
        .collect();
    let mut out = a_hat;
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, inv_sqrt[i] * out.get(i, j) * inv_sqrt[j]);
        }
    }
    Ok(out)
}

/// One graph convolution, `D̂^{-1/2}ÂD̂^{-1/2} X W` (self-loops inserted here).
pub fn gcn_layer(tape: &mut Tape, x: Var, adjacency: &Tensor, w: Var) -> Result<Var> {
    let n = tape.value(x).rows();
    if adjacency.rows() != n {
        return Err(Error::shape(format!(
            "{} feature rows vs adjacency of {} nodes",
            n,
            adjacency.rows()
        )));
    }
    let norm = Arc::new(normalized_adjacency(adjacency)?);
    let propagated = tape.const_left_mul(norm, x)?;
    tape.matmul(propagated, w)
}
