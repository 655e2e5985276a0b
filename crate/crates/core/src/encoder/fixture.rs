//! Deterministic stand-in for the model service.
//!
//! Every word maps to a pseudo-random vector seeded by its hash, so texts that
//! share words get similar embeddings. NLI is driven by negation cue words and
//! word overlap; relevance is the fraction of query words found in the passage.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::types::{NliTriplet, PairEncoding, SentenceEmbedding};
use super::wire::{HealthResponse, ServiceModels};
use super::EncoderBackend;
use crate::corpus::{EntitySpan, EntityTagger, TokenCounter};
use crate::error::{Error, Result};

const NEGATION_CUES: &[&str] = &[
    "not", "no", "never", "false", "fake", "hoax", "denied", "debunked", "untrue", "myth",
];

/// How the fixture produces NLI distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureNli {
    /// Contradiction from negation cues, entailment from word overlap.
    Cues,
    /// The same triplet for every pair: carries no information about the label.
    Constant(NliTriplet),
}

#[derive(Debug, Clone)]
pub struct FixtureEncoder {
    pub embed_dim: usize,
    pub encoder_dim: usize,
    pub max_length: usize,
    pub nli_mode: FixtureNli,
    pub models: ServiceModels,
}

impl Default for FixtureEncoder {
    fn default() -> Self {
        Self::new(32, 16)
    }
}

impl FixtureEncoder {
    pub fn new(embed_dim: usize, encoder_dim: usize) -> Self {
        Self {
            embed_dim,
            encoder_dim,
            max_length: 512,
            nli_mode: FixtureNli::Cues,
            models: ServiceModels {
                embedder: "fixture-embedder".into(),
                pair_encoder: "fixture-encoder".into(),
                nli: "fixture-nli".into(),
                reranker: "fixture-reranker".into(),
                ner: "fixture-ner".into(),
            },
        }
    }

    pub fn with_nli(mut self, mode: FixtureNli) -> Self {
        self.nli_mode = mode;
        self
    }

    pub fn with_max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }

    pub fn words(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .collect()
    }

    fn word_vector(salt: &str, word: &str, dim: usize) -> Vec<f64> {
        let digest = Sha256::digest(format!("{salt}\u{0}{word}").as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    pub fn embed_one(&self, text: &str) -> SentenceEmbedding {
        let mut words = Self::words(text);
        if words.is_empty() {
            words.push(text.to_string());
        }
        let mut sum = vec![0.0f64; self.embed_dim];
        for w in &words {
            for (s, v) in sum.iter_mut().zip(Self::word_vector("embed", w, self.embed_dim)) {
                *s += v;
            }
        }
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        SentenceEmbedding {
            vector: sum.iter().map(|v| (v / norm) as f32).collect(),
            model_id: self.models.embedder.clone(),
        }
    }

    /// Token layout `<s> a </s>` or `<s> a </s> </s> b </s>`; over-length
    /// input loses words from the second text first.
    fn tokens(&self, first: &str, second: Option<&str>) -> Vec<String> {
        let mut a = Self::words(first);
        let mut b = second.map(Self::words).unwrap_or_default();
        let specials = if second.is_some() { 4 } else { 2 };
        let budget = self.max_length.saturating_sub(specials).max(1);
        if a.len() + b.len() > budget {
            let keep_b = budget.saturating_sub(a.len());
            b.truncate(keep_b);
            a.truncate(budget - b.len());
        }
        let mut out = vec!["<s>".to_string()];
        out.extend(a);
        out.push("</s>".into());
        if second.is_some() {
            out.push("</s>".into());
            out.extend(b);
            out.push("</s>".into());
        }
        out
    }

    /// Word rows are hashed vectors; the leading `<s>` row is the mean of the
    /// word rows and `pooled` is `tanh` of the mean over all rows.
    fn encode_tokens(&self, tokens: &[String]) -> PairEncoding {
        let d = self.encoder_dim;
        let mut rows: Vec<Vec<f64>> = tokens.iter().map(|t| Self::word_vector("encode", t, d)).collect();
        let words: Vec<usize> = (0..tokens.len()).filter(|&i| !tokens[i].starts_with('<')).collect();
        if !words.is_empty() {
            let mut mean = vec![0.0; d];
            for &i in &words {
                for (m, v) in mean.iter_mut().zip(&rows[i]) {
                    *m += v / words.len() as f64;
                }
            }
            rows[0] = mean;
        }
        let mut pooled = vec![0.0; d];
        for r in &rows {
            for (p, v) in pooled.iter_mut().zip(r) {
                *p += v / rows.len() as f64;
            }
        }
        PairEncoding {
            dim: d,
            token_vectors: rows.iter().flatten().map(|&v| v as f32).collect(),
            pooled: pooled.iter().map(|v| v.tanh() as f32).collect(),
            model_id: self.models.pair_encoder.clone(),
        }
    }

    pub fn encode_pair_one(&self, claim: &str, evidence: &str) -> PairEncoding {
        self.encode_tokens(&self.tokens(claim, Some(evidence)))
    }

    pub fn encode_single_one(&self, text: &str) -> PairEncoding {
        self.encode_tokens(&self.tokens(text, None))
    }

    pub fn nli_one(&self, claim: &str, evidence: &str) -> NliTriplet {
        if let FixtureNli::Constant(t) = self.nli_mode {
            return t;
        }
        let c = Self::words(claim);
        let e = Self::words(evidence);
        if c == e {
            return NliTriplet::ENTAILMENT;
        }
        let cues = e.iter().filter(|w| NEGATION_CUES.contains(&w.as_str())).count() as f64;
        let overlap = overlap_fraction(&c, &e);
        let logits = [2.5 * cues, 1.0, 3.0 * overlap];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        NliTriplet {
            contradiction: exp[0] / z,
            neutral: exp[1] / z,
            entailment: exp[2] / z,
        }
    }

    pub fn rerank_one(&self, query: &str, passage: &str) -> f64 {
        overlap_fraction(&Self::words(query), &Self::words(passage))
    }

    /// Capitalised word runs. Kind is chosen by suffix or a small place list,
    /// defaulting to PERSON.
    pub fn ner_one(&self, text: &str) -> Vec<EntitySpan> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"\b[A-Z][A-Za-z]+(?:\s+[A-Z][A-Za-z]+)*").unwrap());
        re.find_iter(text)
            .filter(|m| m.start() > 0 || m.as_str().contains(' '))
            .map(|m| {
                let s = m.as_str();
                let last = s.rsplit(' ').next().unwrap_or(s);
                let kind = match last {
                    "Inc" | "Corp" | "Organization" | "Ministry" | "University" | "Party" | "Agency" => "ORG",
                    "Airport" | "Bridge" | "Hospital" | "Stadium" | "Tower" => "FAC",
                    _ if PLACES.contains(&s) => "GPE",
                    _ => "PERSON",
                };
                EntitySpan {
                    start: m.start(),
                    end: m.end(),
                    text: s.to_string(),
                    kind: kind.to_string(),
                }
            })
            .collect()
    }

    /// Roughly one subword per four characters.
    pub fn token_count_one(&self, word: &str) -> usize {
        word.chars().count().div_ceil(4).max(1)
    }
}

const PLACES: &[&str] = &[
    "China", "France", "Germany", "India", "Italy", "Spain", "Brazil", "Canada", "Japan", "London", "Paris",
    "Wuhan", "Europe", "America", "United States", "United Kingdom",
];

fn overlap_fraction(query: &[String], passage: &[String]) -> f64 {
    let q: std::collections::BTreeSet<&String> = query.iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let p: std::collections::BTreeSet<&String> = passage.iter().collect();
    q.iter().filter(|w| p.contains(*w)).count() as f64 / q.len() as f64
}

fn non_empty(texts: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    for t in texts {
        if t.as_ref().trim().is_empty() {
            return Err(Error::invalid("empty text"));
        }
    }
    Ok(())
}

impl EncoderBackend for FixtureEncoder {
    fn health(&self) -> Result<HealthResponse> {
        Ok(HealthResponse {
            models: self.models.clone(),
            embed_dim: self.embed_dim,
            encoder_dim: self.encoder_dim,
            max_length: self.max_length,
            deterministic: true,
        })
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<SentenceEmbedding>> {
        non_empty(texts)?;
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn encode_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<PairEncoding>> {
        non_empty(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        Ok(pairs.iter().map(|(c, e)| self.encode_pair_one(c, e)).collect())
    }

    fn encode_singles(&self, texts: &[&str]) -> Result<Vec<PairEncoding>> {
        non_empty(texts)?;
        Ok(texts.iter().map(|t| self.encode_single_one(t)).collect())
    }

    fn nli(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliTriplet>> {
        non_empty(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        Ok(pairs.iter().map(|(c, e)| self.nli_one(c, e)).collect())
    }

    fn rerank(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        non_empty(pairs.iter().flat_map(|(a, b)| [*a, *b]))?;
        Ok(pairs.iter().map(|(q, p)| self.rerank_one(q, p)).collect())
    }
}

impl EntityTagger for FixtureEncoder {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        Ok(self.ner_one(text))
    }
}

impl TokenCounter for FixtureEncoder {
    fn count_words(&self, words: &[&str]) -> Result<Vec<usize>> {
        Ok(words.iter().map(|w| self.token_count_one(w)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::cosine_similarity_f32;

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let f = FixtureEncoder::default();
        let a = f.embed_one("Vaccines alter human DNA");
        let b = f.embed_one("Vaccines alter human DNA");
        assert_eq!(a, b);
        assert!((cosine_similarity_f32(&a.vector, &b.vector).unwrap() - 1.0).abs() < 1e-6);
        let c = f.embed_one("vaccines alter human dna!");
        assert_eq!(a, c);
        let far = f.embed_one("football results from the weekend");
        assert!(cosine_similarity_f32(&a.vector, &far.vector).unwrap() < 0.9);
    }

    #[test]
    fn identical_pair_is_full_entailment() {
        let f = FixtureEncoder::default();
        assert_eq!(f.nli_one("the sky is blue", "The sky is blue."), NliTriplet::ENTAILMENT);
        let t = f.nli_one("the sky is blue", "the sky is not blue, that is a myth");
        assert!(t.contradiction > t.entailment && t.contradiction > t.neutral);
        t.validate().unwrap();
    }

    #[test]
    fn pair_encoding_respects_max_length_and_keeps_claim() {
        let f = FixtureEncoder::new(8, 4).with_max_length(10);
        let long = "w ".repeat(50);
        let p = f.encode_pair_one("one two three", &long);
        assert_eq!(p.token_count(), 10);
        let q = f.encode_pair_one("one two three", "four");
        assert_eq!(q.token_count(), 8);
        let first = f.encode_pair_one("one two three", "x");
        assert_eq!(&first.token_vectors[4..8], &p.token_vectors[4..8]);
    }

    #[test]
    fn ner_kinds() {
        let f = FixtureEncoder::default();
        let spans = f.ner_one("A video shows Joe Biden at Heathrow Airport in London");
        let kinds: Vec<&str> = spans.iter().map(|s| s.kind.as_str()).collect();
        assert_eq!(kinds, ["PERSON", "FAC", "GPE"]);
        assert_eq!(&"A video shows Joe Biden"[spans[0].start..spans[0].end], "Joe Biden");
    }
}
