use serde::{Deserialize, Serialize};

use crate::encoder::{cosine_similarity_f32, NliTriplet};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// An edge between nodes `i < j` and the similarity that created it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

/// Claim node first, then one node per evidence sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceGraph {
    pub features: Tensor,
    /// Symmetric 0/1 matrix with a zero diagonal.
    pub adjacency: Tensor,
    pub edges: Vec<GraphEdge>,
}

impl EvidenceGraph {
    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    /// The same graph with nodes reordered: new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<EvidenceGraph> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&o| o >= n || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::invalid("order is not a permutation of the nodes"));
        }
        let mut inverse = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let rows: Vec<&[f64]> = order.iter().map(|&o| self.features.row_slice(o)).collect();
        let mut adjacency = Tensor::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                adjacency.set(a, b, self.adjacency.get(order[a], order[b]));
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let (x, y) = (inverse[e.i], inverse[e.j]);
                GraphEdge {
                    i: x.min(y),
                    j: x.max(y),
                    similarity: e.similarity,
                }
            })
            .collect();
        Ok(EvidenceGraph {
            features: Tensor::from_rows(&rows)?,
            adjacency,
            edges,
        })
    }
}

/// Node feature row: an encoder vector followed by an inference triplet.
pub fn graph_node_features(vector: &[f32], triplet: &NliTriplet) -> Vec<f64> {
    vector
        .iter()
        .map(|&v| v as f64)
        .chain(triplet.as_array())
        .collect()
}

/// Links two nodes when the cosine similarity of their sentence embeddings
/// exceeds `threshold`, for claim-evidence and evidence-evidence pairs.
pub fn build_evidence_graph(
    claim_embedding: &[f32],
    evidence_embeddings: &[Vec<f32>],
    claim_features: &[f64],
    evidence_features: &[Vec<f64>],
    threshold: f64,
) -> Result<EvidenceGraph> {
    if evidence_embeddings.len() != evidence_features.len() {
        return Err(Error::shape(format!(
            "{} evidence embeddings vs {} feature rows",
            evidence_embeddings.len(),
            evidence_features.len()
        )));
    }
    let f = claim_features.len();
    if let Some(bad) = evidence_features.iter().find(|r| r.len() != f) {
        return Err(Error::shape(format!("evidence feature row of {} vs claim row of {f}", bad.len())));
    }
    let mut rows: Vec<&[f64]> = vec![claim_features];
    rows.extend(evidence_features.iter().map(Vec::as_slice));
    let features = Tensor::from_rows(&rows)?;

    let mut embeddings: Vec<&[f32]> = vec![claim_embedding];
    embeddings.extend(evidence_embeddings.iter().map(Vec::as_slice));
    let n = embeddings.len();
    let mut adjacency = Tensor::zeros(n, n);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine_similarity_f32(embeddings[i], embeddings[j])?;
            if s > threshold {
                adjacency.set(i, j, 1.0);
                adjacency.set(j, i, 1.0);
                edges.push(GraphEdge { i, j, similarity: s });
            }
        }
    }
    Ok(EvidenceGraph {
        features,
        adjacency,
        edges,
    })
}
