use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model identities the client uses for cache keys and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub embedder: String,
    pub pair_encoder: String,
    pub nli: String,
    pub reranker: String,
}

impl Default for ModelIds {
    fn default() -> Self {
        Self {
            embedder: "sentence-transformers/all-MiniLM-L12-v2".into(),
            pair_encoder: "roberta-large".into(),
            nli: "roberta-large-mnli".into(),
            reranker: "castorini/monot5-base-msmarco".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub vector: Vec<f32>,
    pub model_id: String,
}

/// Encoder output for a text pair (or a single text): one vector per token
/// plus the service-defined pooled vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoding {
    pub dim: usize,
    /// `token_count × dim`, row-major.
    pub token_vectors: Vec<f32>,
    pub pooled: Vec<f32>,
    pub model_id: String,
}

impl PairEncoding {
    pub fn new(dim: usize, token_vectors: Vec<f32>, pooled: Vec<f32>, model_id: String) -> Result<Self> {
        if dim == 0 || token_vectors.is_empty() || !token_vectors.len().is_multiple_of(dim) {
            return Err(Error::Service(format!(
                "token vectors of length {} are not a positive multiple of dim {dim}",
                token_vectors.len()
            )));
        }
        if pooled.len() != dim {
            return Err(Error::Service(format!("pooled vector has {} entries, expected {dim}", pooled.len())));
        }
        check_finite(&token_vectors, "token vectors")?;
        check_finite(&pooled, "pooled vector")?;
        Ok(Self {
            dim,
            token_vectors,
            pooled,
            model_id,
        })
    }

    pub fn token_count(&self) -> usize {
        self.token_vectors.len() / self.dim
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.token_vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Inference distribution over (contradiction, neutral, entailment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliTriplet {
    pub contradiction: f64,
    pub neutral: f64,
    pub entailment: f64,
}

impl NliTriplet {
    pub const NEUTRAL: NliTriplet = NliTriplet {
        contradiction: 0.0,
        neutral: 1.0,
        entailment: 0.0,
    };
    pub const ENTAILMENT: NliTriplet = NliTriplet {
        contradiction: 0.0,
        neutral: 0.0,
        entailment: 1.0,
    };

    pub fn new(contradiction: f64, neutral: f64, entailment: f64) -> Result<Self> {
        let t = Self {
            contradiction,
            neutral,
            entailment,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("nli triplet".into()));
        }
        if v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Service(format!("nli probabilities outside [0, 1]: {v:?}")));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Service(format!("nli probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.contradiction, self.neutral, self.entailment]
    }
}

pub(crate) fn check_finite(values: &[f32], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `a·b / (‖a‖‖b‖)`, accumulated in `f64`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("cosine of {}-dim and {}-dim vectors", a.len(), b.len())));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity_f32(a: &[f32], b: &[f32]) -> Result<f64> {
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    cosine_similarity(&a, &b)
}
