//! Content-addressed response cache.
//!
//! File format: one JSON record per line, `{"key", "operation", "payload"}`.
//! Vector payloads are base64 of little-endian `f32` with declared dimensions.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::types::{check_finite, NliTriplet, PairEncoding, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, LockFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Call the service, never touch the cache.
    Live,
    /// Serve hits from the cache, call the service on misses and persist them.
    Record,
    /// Serve only from the cache; a miss is an error.
    Replay,
}

impl FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(CacheMode::Live),
            "record" => Ok(CacheMode::Record),
            "replay" => Ok(CacheMode::Replay),
            other => Err(format!("unknown mode {other:?} (live|record|replay)")),
        }
    }
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheMode::Live => "live",
            CacheMode::Record => "record",
            CacheMode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    Embed,
    EncodePair,
    EncodeSingle,
    Nli,
    Rerank,
}

impl Operation {
    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Embed => "embed",
            Operation::EncodePair => "encode-pair",
            Operation::EncodeSingle => "encode-single",
            Operation::Nli => "nli",
            Operation::Rerank => "rerank",
        }
    }
}

/// `sha256` of the canonical JSON array `[operation, model_id, inputs...]`.
pub fn cache_key(op: Operation, model_id: &str, inputs: &[&str]) -> String {
    let mut parts: Vec<Value> = vec![op.as_str().into(), model_id.into()];
    parts.extend(inputs.iter().map(|s| Value::from(*s)));
    let canonical = serde_json::to_string(&Value::Array(parts)).expect("json array");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_f32s(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f32s(encoded: &str, expected: usize) -> Result<Vec<f32>> {
    let bytes = B64
        .decode(encoded)
        .map_err(|e| Error::Format(format!("bad base64 payload: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {} floats",
            bytes.len(),
            expected
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_finite(&values, "decoded payload")?;
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedPayload {
    pub model_id: String,
    pub dim: usize,
    pub vector: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPayload {
    pub model_id: String,
    pub dim: usize,
    pub token_count: usize,
    pub token_vectors: String,
    pub pooled: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPayload {
    pub model_id: String,
    pub contradiction: f64,
    pub neutral: f64,
    pub entailment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePayload {
    pub model_id: String,
    pub score: f64,
}

impl From<&SentenceEmbedding> for EmbedPayload {
    fn from(e: &SentenceEmbedding) -> Self {
        Self {
            model_id: e.model_id.clone(),
            dim: e.vector.len(),
            vector: encode_f32s(&e.vector),
        }
    }
}

impl EmbedPayload {
    pub fn decode(&self) -> Result<SentenceEmbedding> {
        Ok(SentenceEmbedding {
            vector: decode_f32s(&self.vector, self.dim)?,
            model_id: self.model_id.clone(),
        })
    }
}

impl From<&PairEncoding> for EncodingPayload {
    fn from(p: &PairEncoding) -> Self {
        Self {
            model_id: p.model_id.clone(),
            dim: p.dim,
            token_count: p.token_count(),
            token_vectors: encode_f32s(&p.token_vectors),
            pooled: encode_f32s(&p.pooled),
        }
    }
}

impl EncodingPayload {
    pub fn decode(&self) -> Result<PairEncoding> {
        PairEncoding::new(
            self.dim,
            decode_f32s(&self.token_vectors, self.token_count * self.dim)?,
            decode_f32s(&self.pooled, self.dim)?,
            self.model_id.clone(),
        )
    }
}

impl NliPayload {
    pub fn new(model_id: &str, t: &NliTriplet) -> Self {
        Self {
            model_id: model_id.to_string(),
            contradiction: t.contradiction,
            neutral: t.neutral,
            entailment: t.entailment,
        }
    }

    pub fn decode(&self) -> Result<NliTriplet> {
        NliTriplet::new(self.contradiction, self.neutral, self.entailment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub operation: String,
    pub payload: Value,
}

/// In-memory view of a cache file. Writes rewrite the file atomically.
#[derive(Debug, Default)]
pub struct EncoderCache {
    path: Option<PathBuf>,
    entries: Vec<CacheEntry>,
    by_key: HashMap<String, usize>,
    dirty: bool,
}

impl EncoderCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(line)
                    .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
                cache.insert_entry(entry);
            }
            cache.dirty = false;
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.by_key.get(key).map(|&i| &self.entries[i])
    }

    pub fn insert(&mut self, key: String, op: Operation, payload: Value) {
        self.insert_entry(CacheEntry {
            key,
            operation: op.as_str().to_string(),
            payload,
        });
    }

    fn insert_entry(&mut self, entry: CacheEntry) {
        match self.by_key.get(&entry.key) {
            Some(&i) => self.entries[i] = entry,
            None => {
                self.by_key.insert(entry.key.clone(), self.entries.len());
                self.entries.push(entry);
            }
        }
        self.dirty = true;
    }

    /// JSON lines ordered by key, independent of insertion order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sorted: Vec<&CacheEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| a.key.cmp(&b.key));
        let mut buf = Vec::new();
        for e in sorted {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    /// Persists pending entries under a `<path>.lock` guard.
    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = self.path.clone() else {
            self.dirty = false;
            return Ok(());
        };
        if !self.dirty {
            return Ok(());
        }
        let _lock = LockFile::acquire(&path)?;
        atomic_write(&path, &self.to_bytes()?)?;
        self.dirty = false;
        Ok(())
    }
}
