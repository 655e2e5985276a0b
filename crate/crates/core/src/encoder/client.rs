use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::cache::{cache_key, CacheMode, EmbedPayload, EncoderCache, EncodingPayload, NliPayload, Operation, ScorePayload};
use super::types::{ModelIds, NliTriplet, PairEncoding, SentenceEmbedding};
use super::EncoderBackend;
use crate::error::{Error, Result};

/// Cached, validated access to an [`EncoderBackend`].
///
/// In replay mode there is no backend and every answer comes from the cache.
pub struct EncoderClient {
    backend: Option<Arc<dyn EncoderBackend>>,
    models: ModelIds,
    mode: CacheMode,
    embed_dim: Option<usize>,
    cache: Mutex<EncoderCache>,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for EncoderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncoderClient")
            .field("models", &self.models)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl EncoderClient {
    /// Live or record client. The backend's reported models become the
    /// client's model identities.
    pub fn new(backend: Arc<dyn EncoderBackend>, mode: CacheMode, cache: EncoderCache) -> Result<Self> {
        if mode == CacheMode::Replay {
            return Err(Error::invalid("replay mode takes no backend; use EncoderClient::replay"));
        }
        let health = backend.health()?;
        Ok(Self {
            backend: Some(backend),
            models: health.models.ids(),
            mode,
            embed_dim: Some(health.embed_dim),
            cache: Mutex::new(cache),
            backend_calls: AtomicUsize::new(0),
        })
    }

    /// Like [`EncoderClient::new`] but fails unless the backend serves `expected`.
    pub fn with_models(
        backend: Arc<dyn EncoderBackend>,
        mode: CacheMode,
        cache: EncoderCache,
        expected: &ModelIds,
    ) -> Result<Self> {
        let client = Self::new(backend, mode, cache)?;
        if &client.models != expected {
            return Err(Error::Service(format!(
                "service models {:?} do not match configured {:?}",
                client.models, expected
            )));
        }
        Ok(client)
    }

    pub fn replay(models: ModelIds, cache: EncoderCache) -> Self {
        Self {
            backend: None,
            models,
            mode: CacheMode::Replay,
            embed_dim: None,
            cache: Mutex::new(cache),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn models(&self) -> &ModelIds {
        &self.models
    }

    /// Number of batched backend calls made so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// Writes recorded responses to the cache file.
    pub fn flush(&self) -> Result<()> {
        if self.mode == CacheMode::Record {
            self.cache.lock().expect("cache lock").flush()?;
        }
        Ok(())
    }

    /// Consumes the client and returns its cache (flushed in record mode).
    pub fn into_cache(self) -> Result<EncoderCache> {
        self.flush()?;
        Ok(self.cache.into_inner().expect("cache lock"))
    }

    pub fn embed_sentences(&self, texts: &[&str]) -> Result<Vec<SentenceEmbedding>> {
        require_text(texts.iter().copied())?;
        let model = self.models.embedder.clone();
        let keys: Vec<String> = texts.iter().map(|t| cache_key(Operation::Embed, &model, &[t])).collect();
        let out = self.cached(
            Operation::Embed,
            &keys,
            |idx| {
                let batch: Vec<&str> = idx.iter().map(|&i| texts[i]).collect();
                self.backend()?.embed(&batch)
            },
            |e: &SentenceEmbedding| EmbedPayload::from(e),
            |p: EmbedPayload| p.decode(),
        )?;
        for e in &out {
            self.check_model(&e.model_id, &model)?;
            if let Some(dim) = self.embed_dim {
                if e.vector.len() != dim {
                    return Err(Error::Service(format!(
                        "embedding has dimension {}, service declared {dim}",
                        e.vector.len()
                    )));
                }
            }
        }
        Ok(out)
    }

    pub fn embed_sentence(&self, text: &str) -> Result<SentenceEmbedding> {
        Ok(self.embed_sentences(&[text])?.remove(0))
    }

    pub fn encode_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<PairEncoding>> {
        require_text(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        let model = self.models.pair_encoder.clone();
        let keys: Vec<String> = pairs
            .iter()
            .map(|(c, e)| cache_key(Operation::EncodePair, &model, &[c, e]))
            .collect();
        let out = self.cached(
            Operation::EncodePair,
            &keys,
            |idx| {
                let batch: Vec<(&str, &str)> = idx.iter().map(|&i| pairs[i]).collect();
                self.backend()?.encode_pairs(&batch)
            },
            |p: &PairEncoding| EncodingPayload::from(p),
            |p: EncodingPayload| p.decode(),
        )?;
        self.check_encodings(&out, &model)?;
        Ok(out)
    }

    pub fn encode_pair(&self, claim: &str, evidence: &str) -> Result<PairEncoding> {
        Ok(self.encode_pairs(&[(claim, evidence)])?.remove(0))
    }

    pub fn encode_singles(&self, texts: &[&str]) -> Result<Vec<PairEncoding>> {
        require_text(texts.iter().copied())?;
        let model = self.models.pair_encoder.clone();
        let keys: Vec<String> = texts
            .iter()
            .map(|t| cache_key(Operation::EncodeSingle, &model, &[t]))
            .collect();
        let out = self.cached(
            Operation::EncodeSingle,
            &keys,
            |idx| {
                let batch: Vec<&str> = idx.iter().map(|&i| texts[i]).collect();
                self.backend()?.encode_singles(&batch)
            },
            |p: &PairEncoding| EncodingPayload::from(p),
            |p: EncodingPayload| p.decode(),
        )?;
        self.check_encodings(&out, &model)?;
        Ok(out)
    }

    pub fn encode_single(&self, text: &str) -> Result<PairEncoding> {
        Ok(self.encode_singles(&[text])?.remove(0))
    }

    pub fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliTriplet>> {
        require_text(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        let model = self.models.nli.clone();
        let keys: Vec<String> = pairs.iter().map(|(c, e)| cache_key(Operation::Nli, &model, &[c, e])).collect();
        let m = model.clone();
        self.cached(
            Operation::Nli,
            &keys,
            |idx| {
                let batch: Vec<(&str, &str)> = idx.iter().map(|&i| pairs[i]).collect();
                self.backend()?.nli(&batch)
            },
            move |t: &NliTriplet| NliPayload::new(&m, t),
            |p: NliPayload| {
                if p.model_id != model {
                    return Err(Error::Service(format!("cached nli model {} is not {model}", p.model_id)));
                }
                p.decode()
            },
        )
    }

    pub fn nli(&self, claim: &str, evidence: &str) -> Result<NliTriplet> {
        Ok(self.nli_batch(&[(claim, evidence)])?.remove(0))
    }

    /// Relevance probability for each `(query, passage)` pair.
    pub fn rerank(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        require_text(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        let model = self.models.reranker.clone();
        let keys: Vec<String> = pairs
            .iter()
            .map(|(q, p)| cache_key(Operation::Rerank, &model, &[q, p]))
            .collect();
        let m = model.clone();
        self.cached(
            Operation::Rerank,
            &keys,
            |idx| {
                let batch: Vec<(&str, &str)> = idx.iter().map(|&i| pairs[i]).collect();
                let scores = self.backend()?.rerank(&batch)?;
                for s in &scores {
                    check_probability(*s)?;
                }
                Ok(scores)
            },
            move |s: &f64| ScorePayload {
                model_id: m.clone(),
                score: *s,
            },
            |p: ScorePayload| {
                if p.model_id != model {
                    return Err(Error::Service(format!("cached rerank model {} is not {model}", p.model_id)));
                }
                check_probability(p.score)?;
                Ok(p.score)
            },
        )
    }

    fn backend(&self) -> Result<&Arc<dyn EncoderBackend>> {
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        self.backend
            .as_ref()
            .ok_or_else(|| Error::Service("no backend available in replay mode".into()))
    }

    fn check_model(&self, got: &str, expected: &str) -> Result<()> {
        if got == expected {
            Ok(())
        } else {
            Err(Error::Service(format!("response from model {got}, expected {expected}")))
        }
    }

    fn check_encodings(&self, encodings: &[PairEncoding], model: &str) -> Result<()> {
        for e in encodings {
            self.check_model(&e.model_id, model)?;
        }
        Ok(())
    }

    /// Resolves each key from the cache or the backend according to the mode.
    /// Values always pass through their payload form so that recorded and
    /// replayed answers are bit-identical.
    fn cached<T, P, F, S, D>(&self, op: Operation, keys: &[String], fetch: F, to_payload: S, from_payload: D) -> Result<Vec<T>>
    where
        P: Serialize + DeserializeOwned,
        F: FnOnce(&[usize]) -> Result<Vec<T>>,
        S: Fn(&T) -> P,
        D: Fn(P) -> Result<T>,
    {
        let decode = |v: &Value| -> Result<T> {
            let p: P = serde_json::from_value(v.clone())
                .map_err(|e| Error::Format(format!("bad cached {} payload: {e}", op.as_str())))?;
            from_payload(p)
        };
        let mut out: Vec<Option<T>> = (0..keys.len()).map(|_| None).collect();
        let mut missing = Vec::new();
        if self.mode == CacheMode::Live {
            missing = (0..keys.len()).collect();
        } else {
            let cache = self.cache.lock().expect("cache lock");
            for (i, key) in keys.iter().enumerate() {
                match cache.get(key) {
                    Some(entry) => out[i] = Some(decode(&entry.payload)?),
                    None if self.mode == CacheMode::Replay => {
                        return Err(Error::CacheMiss {
                            operation: op.as_str().to_string(),
                            key: key.clone(),
                        })
                    }
                    None => missing.push(i),
                }
            }
        }
        if !missing.is_empty() {
            // Duplicate inputs within a batch are fetched once.
            let mut unique: Vec<usize> = Vec::new();
            let mut first_of: std::collections::HashMap<&str, usize> = Default::default();
            for &i in &missing {
                first_of.entry(keys[i].as_str()).or_insert_with(|| {
                    unique.push(i);
                    unique.len() - 1
                });
            }
            let fetched = fetch(&unique)?;
            super::wire::check_count(op.as_str(), fetched.len(), unique.len())?;
            let payloads = fetched
                .iter()
                .map(|v| serde_json::to_value(to_payload(v)))
                .collect::<Result<Vec<Value>, _>>()?;
            if self.mode == CacheMode::Record {
                let mut cache = self.cache.lock().expect("cache lock");
                for (slot, payload) in unique.iter().zip(&payloads) {
                    cache.insert(keys[*slot].clone(), op, payload.clone());
                }
            }
            for &i in &missing {
                out[i] = Some(decode(&payloads[first_of[keys[i].as_str()]])?);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}

fn require_text<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut any = false;
    for t in texts {
        any = true;
        if t.trim().is_empty() {
            return Err(Error::invalid("encoder inputs must be non-empty text"));
        }
    }
    if any {
        Ok(())
    } else {
        Err(Error::invalid("empty encoder batch"))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::NonFinite("relevance score".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Service(format!("relevance score {p} outside [0, 1]")));
    }
    Ok(())
}
