//! Blocking HTTP client for the model service.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::{NliTriplet, PairEncoding, SentenceEmbedding};
use super::wire::{
    check_count, EmbedResponse, EncodeResponse, ErrorResponse, HealthResponse, NerResponse, NliResponse,
    PairsRequest, RerankResponse, TextsRequest, TokenCountResponse,
};
use super::EncoderBackend;
use crate::corpus::{EntitySpan, EntityTagger, TokenCounter};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_BATCH: usize = 32;

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    agent: ureq::Agent,
    max_batch: usize,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(300)).build(),
            max_batch: DEFAULT_MAX_BATCH,
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn decode<R: DeserializeOwned>(&self, path: &str, resp: std::result::Result<ureq::Response, ureq::Error>) -> Result<R> {
        match resp {
            Ok(r) => r
                .into_json::<R>()
                .map_err(|e| Error::Service(format!("{path}: malformed response: {e}"))),
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                let msg = serde_json::from_str::<ErrorResponse>(&body)
                    .map(|e| e.error)
                    .unwrap_or(body);
                Err(Error::Service(format!("{path}: status {code}: {msg}")))
            }
            Err(e) => Err(Error::Service(format!("{path}: {e}"))),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let resp = self.agent.post(&self.url(path)).send_json(serde_json::to_value(body)?);
        self.decode(path, resp)
    }

    /// Splits `items` into service-sized batches and concatenates the results.
    fn batched<I, T>(&self, items: &[I], mut call: impl FnMut(&[I]) -> Result<Vec<T>>) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.max_batch) {
            out.extend(call(chunk)?);
        }
        Ok(out)
    }

    fn texts(chunk: &[&str]) -> TextsRequest {
        TextsRequest {
            texts: chunk.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn ner(&self, texts: &[&str]) -> Result<Vec<Vec<EntitySpan>>> {
        self.batched(texts, |chunk| {
            let r: NerResponse = self.post("/ner", &Self::texts(chunk))?;
            check_count("/ner", r.results.len(), chunk.len())?;
            Ok(r.results)
        })
    }

    pub fn tokenize_count(&self, texts: &[&str]) -> Result<Vec<usize>> {
        self.batched(texts, |chunk| {
            let r: TokenCountResponse = self.post("/tokenize-count", &Self::texts(chunk))?;
            check_count("/tokenize-count", r.counts.len(), chunk.len())?;
            Ok(r.counts)
        })
    }
}

impl EncoderBackend for HttpBackend {
    fn health(&self) -> Result<HealthResponse> {
        let resp = self.agent.get(&self.url("/health")).call();
        self.decode("/health", resp)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<SentenceEmbedding>> {
        self.batched(texts, |chunk| {
            let r: EmbedResponse = self.post("/embed", &Self::texts(chunk))?;
            r.decode(chunk.len())
        })
    }

    fn encode_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<PairEncoding>> {
        self.batched(pairs, |chunk| {
            let r: EncodeResponse = self.post("/encode-pair", &PairsRequest::from(chunk))?;
            r.decode(chunk.len())
        })
    }

    fn encode_singles(&self, texts: &[&str]) -> Result<Vec<PairEncoding>> {
        self.batched(texts, |chunk| {
            let r: EncodeResponse = self.post("/encode-single", &Self::texts(chunk))?;
            r.decode(chunk.len())
        })
    }

    fn nli(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliTriplet>> {
        self.batched(pairs, |chunk| {
            let r: NliResponse = self.post("/nli", &PairsRequest::from(chunk))?;
            check_count("/nli", r.results.len(), chunk.len())?;
            for t in &r.results {
                t.validate()?;
            }
            Ok(r.results)
        })
    }

    fn rerank(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        self.batched(pairs, |chunk| {
            let r: RerankResponse = self.post("/rerank", &PairsRequest::from(chunk))?;
            check_count("/rerank", r.scores.len(), chunk.len())?;
            Ok(r.scores)
        })
    }
}

impl EntityTagger for HttpBackend {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        Ok(self.ner(&[text])?.remove(0))
    }
}

impl TokenCounter for HttpBackend {
    fn count_words(&self, words: &[&str]) -> Result<Vec<usize>> {
        self.tokenize_count(words)
    }
}
