use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_evidence_graph, graph_node_features, ClaimFeatures, HeadKind, PairFeatures};
use crate::encoder::{EncoderClient, NliTriplet, PairEncoding};
use crate::error::Result;
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Evidence sentences used per claim; extra sentences are ignored.
    pub pairs: usize,
    /// Cosine similarity above which two graph nodes are linked.
    pub graph_threshold: f64,
}

impl FeatureConfig {
    pub fn for_head(kind: HeadKind) -> Self {
        Self {
            pairs: kind.default_pairs(),
            graph_threshold: 0.9,
        }
    }
}

fn tensor(values: &[f32], rows: usize, cols: usize) -> Result<Tensor> {
    Tensor::new(rows, cols, values.iter().map(|&v| v as f64).collect())
}

fn token_tensor(e: &PairEncoding) -> Result<Arc<Tensor>> {
    Ok(Arc::new(tensor(&e.token_vectors, e.token_count(), e.dim)?))
}

fn pooled_tensor(e: &PairEncoding) -> Result<Arc<Tensor>> {
    Ok(Arc::new(tensor(&e.pooled, 1, e.dim)?))
}

/// Encoder inputs for one claim and its evidence (most similar first), with
/// only the parts `kind` consumes requested from the encoder.
pub fn claim_features(
    kind: HeadKind,
    config: &FeatureConfig,
    claim: &str,
    evidence: &[&str],
    client: &EncoderClient,
) -> Result<ClaimFeatures> {
    let evidence = &evidence[..evidence.len().min(config.pairs)];
    let pairs: Vec<(&str, &str)> = evidence.iter().map(|e| (claim, *e)).collect();
    let triplets = if pairs.is_empty() { vec![] } else { client.nli_batch(&pairs)? };

    let encodings = match kind {
        HeadKind::NliSan | HeadKind::NliSent | HeadKind::NliPsent if !pairs.is_empty() => {
            Some(client.encode_pairs(&pairs)?)
        }
        _ => None,
    };
    let mut out = Vec::with_capacity(triplets.len());
    for (i, nli) in triplets.iter().enumerate() {
        let enc = encodings.as_ref().map(|e| &e[i]);
        out.push(PairFeatures {
            tokens: match (kind, enc) {
                (HeadKind::NliSan | HeadKind::NliSent, Some(e)) => Some(token_tensor(e)?),
                _ => None,
            },
            pooled: match (kind, enc) {
                (HeadKind::NliPsent, Some(e)) => Some(pooled_tensor(e)?),
                _ => None,
            },
            nli: *nli,
        });
    }

    let graph = if kind.is_graph() {
        let mut texts = vec![claim];
        texts.extend_from_slice(evidence);
        let embeddings = client.embed_sentences(&texts)?;
        let claim_node = NliTriplet::new(0.0, 0.0, 1.0)?;
        let (claim_row, evidence_rows) = if kind == HeadKind::NliGraph {
            let singles = client.encode_singles(&texts)?;
            (
                graph_node_features(&singles[0].pooled, &claim_node),
                singles[1..]
                    .iter()
                    .zip(&triplets)
                    .map(|(s, t)| graph_node_features(&s.pooled, t))
                    .collect(),
            )
        } else {
            (
                graph_node_features(&[], &claim_node),
                triplets.iter().map(|t| graph_node_features(&[], t)).collect::<Vec<_>>(),
            )
        };
        let evidence_embeddings: Vec<Vec<f32>> = embeddings[1..].iter().map(|e| e.vector.clone()).collect();
        Some(build_evidence_graph(
            &embeddings[0].vector,
            &evidence_embeddings,
            &claim_row,
            &evidence_rows,
            config.graph_threshold,
        )?)
    } else {
        None
    };
    Ok(ClaimFeatures { pairs: out, graph })
}
