//! Boundary to the pretrained models: sentence embeddings, pair encodings,
//! NLI distributions and relevance scores, behind a record/replay cache.

pub mod cache;
mod client;
mod fixture;
mod http;
mod types;
pub mod wire;

pub use cache::{cache_key, CacheMode, EncoderCache, Operation};
pub use client::EncoderClient;
pub use fixture::{FixtureEncoder, FixtureNli};
pub use http::HttpBackend;
pub use types::{cosine_similarity, cosine_similarity_f32, ModelIds, NliTriplet, PairEncoding, SentenceEmbedding};
pub use wire::HealthResponse;

use crate::error::Result;

/// Something that can run the models. Implemented by the HTTP service client
/// and by the deterministic fixture encoder.
///
/// Every method is batched and must return results index-aligned with its input.
pub trait EncoderBackend: Send + Sync {
    fn health(&self) -> Result<HealthResponse>;
    fn embed(&self, texts: &[&str]) -> Result<Vec<SentenceEmbedding>>;
    /// Pairs are `(claim, evidence)`.
    fn encode_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<PairEncoding>>;
    fn encode_singles(&self, texts: &[&str]) -> Result<Vec<PairEncoding>>;
    fn nli(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliTriplet>>;
    /// Pairs are `(query, passage)`; scores are relevance probabilities.
    fn rerank(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;
}
