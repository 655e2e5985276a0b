//! Request and response bodies of the model service. The JSON schema in
//! `schema/sidecar.schema.json` describes the same shapes.

use serde::{Deserialize, Serialize};

use super::cache::{decode_f32s, encode_f32s};
use super::types::{ModelIds, NliTriplet, PairEncoding, SentenceEmbedding};
use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextsRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextPair {
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsRequest {
    pub pairs: Vec<TextPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedResponse {
    pub model_id: String,
    pub dim: usize,
    /// One base64 little-endian `f32` array per input text.
    pub vectors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedText {
    pub token_count: usize,
    pub token_vectors: String,
    pub pooled: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeResponse {
    pub model_id: String,
    pub dim: usize,
    pub results: Vec<EncodedText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliResponse {
    pub model_id: String,
    pub results: Vec<NliTriplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankResponse {
    pub model_id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NerResponse {
    pub model_id: String,
    pub results: Vec<Vec<EntitySpan>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenCountResponse {
    pub model_id: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthResponse {
    pub models: ServiceModels,
    pub embed_dim: usize,
    pub encoder_dim: usize,
    pub max_length: usize,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceModels {
    pub embedder: String,
    pub pair_encoder: String,
    pub nli: String,
    pub reranker: String,
    pub ner: String,
}

impl ServiceModels {
    pub fn ids(&self) -> ModelIds {
        ModelIds {
            embedder: self.embedder.clone(),
            pair_encoder: self.pair_encoder.clone(),
            nli: self.nli.clone(),
            reranker: self.reranker.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponse {
    pub error: String,
}

impl EmbedResponse {
    pub fn from_embeddings(model_id: &str, dim: usize, embeddings: &[SentenceEmbedding]) -> Self {
        Self {
            model_id: model_id.to_string(),
            dim,
            vectors: embeddings.iter().map(|e| encode_f32s(&e.vector)).collect(),
        }
    }

    pub fn decode(&self, expected: usize) -> Result<Vec<SentenceEmbedding>> {
        check_count("embed", self.vectors.len(), expected)?;
        self.vectors
            .iter()
            .map(|v| {
                Ok(SentenceEmbedding {
                    vector: decode_f32s(v, self.dim)?,
                    model_id: self.model_id.clone(),
                })
            })
            .collect()
    }
}

impl EncodeResponse {
    pub fn from_encodings(model_id: &str, dim: usize, encodings: &[PairEncoding]) -> Self {
        Self {
            model_id: model_id.to_string(),
            dim,
            results: encodings
                .iter()
                .map(|p| EncodedText {
                    token_count: p.token_count(),
                    token_vectors: encode_f32s(&p.token_vectors),
                    pooled: encode_f32s(&p.pooled),
                })
                .collect(),
        }
    }

    pub fn decode(&self, expected: usize) -> Result<Vec<PairEncoding>> {
        check_count("encode", self.results.len(), expected)?;
        self.results
            .iter()
            .map(|r| {
                PairEncoding::new(
                    self.dim,
                    decode_f32s(&r.token_vectors, r.token_count * self.dim)?,
                    decode_f32s(&r.pooled, self.dim)?,
                    self.model_id.clone(),
                )
            })
            .collect()
    }
}

pub(crate) fn check_count(what: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Service(format!("{what}: service returned {got} results for {expected} inputs")))
    }
}

impl From<&[(&str, &str)]> for PairsRequest {
    fn from(pairs: &[(&str, &str)]) -> Self {
        Self {
            pairs: pairs
                .iter()
                .map(|(a, b)| TextPair {
                    first: a.to_string(),
                    second: b.to_string(),
                })
                .collect(),
        }
    }
}
