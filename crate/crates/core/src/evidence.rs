//! Evidence sentence selection by embedding similarity to the claim.

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, SentenceSplitter};
use crate::encoder::{cosine_similarity_f32, EncoderClient};
use crate::error::{Error, Result};
use crate::index::{Analyzer, AnalyzerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSentence {
    pub text: String,
    pub source_doc_id: String,
    pub similarity: f64,
    /// Rank of the source document in the retrieval list (0-based).
    #[serde(skip)]
    pub doc_rank: usize,
    /// Sentence position within its document.
    #[serde(skip)]
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The `n` most similar sentences over all documents.
    FlatTopN { n: usize },
    /// The `per_doc` most similar sentences of each document, pooled.
    PerDocTopM { per_doc: usize },
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionPolicy::FlatTopN { n: 0 } | SelectionPolicy::PerDocTopM { per_doc: 0 } => {
                Err(Error::invalid("evidence selection size must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub claim_id: String,
    pub policy: SelectionPolicy,
    pub sentences: Vec<EvidenceSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceConfig {
    pub policy: SelectionPolicy,
    /// Sentences with fewer analyzer tokens are not candidates.
    pub min_tokens: usize,
    pub analyzer: AnalyzerConfig,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            policy: SelectionPolicy::FlatTopN { n: 5 },
            min_tokens: 3,
            analyzer: AnalyzerConfig::default(),
        }
    }
}

/// A candidate sentence before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSentence {
    pub text: String,
    pub doc_id: String,
    pub doc_rank: usize,
    pub position: usize,
}

/// Splits documents (in rank order) into candidate sentences, dropping
/// sentences shorter than `min_tokens` analyzer tokens.
pub fn candidate_sentences(docs: &[DocumentRecord], analyzer: &Analyzer, min_tokens: usize) -> Vec<CandidateSentence> {
    let splitter = SentenceSplitter::default();
    let mut out = Vec::new();
    for (rank, doc) in docs.iter().enumerate() {
        for (pos, s) in splitter.split(&doc.text).into_iter().enumerate() {
            if analyzer.analyze(&s).len() >= min_tokens {
                out.push(CandidateSentence {
                    text: s,
                    doc_id: doc.id.clone(),
                    doc_rank: rank,
                    position: pos,
                });
            }
        }
    }
    out
}

fn by_rank(a: &EvidenceSentence, b: &EvidenceSentence) -> std::cmp::Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.doc_rank.cmp(&b.doc_rank))
        .then(a.position.cmp(&b.position))
}

/// Applies a selection policy to scored sentences. Ties in similarity go to
/// the better-ranked document, then the earlier sentence.
pub fn select_evidence(mut scored: Vec<EvidenceSentence>, policy: SelectionPolicy) -> Result<Vec<EvidenceSentence>> {
    policy.validate()?;
    scored.sort_by(by_rank);
    match policy {
        SelectionPolicy::FlatTopN { n } => {
            scored.truncate(n);
            Ok(scored)
        }
        SelectionPolicy::PerDocTopM { per_doc } => {
            let mut taken: std::collections::HashMap<String, usize> = Default::default();
            Ok(scored
                .into_iter()
                .filter(|s| {
                    let c = taken.entry(s.source_doc_id.clone()).or_insert(0);
                    *c += 1;
                    *c <= per_doc
                })
                .collect())
        }
    }
}

/// Embeds the claim and every candidate sentence and selects evidence.
pub fn retrieve_evidence(
    claim_id: &str,
    claim_text: &str,
    docs: &[DocumentRecord],
    config: &EvidenceConfig,
    client: &EncoderClient,
) -> Result<EvidenceSet> {
    config.policy.validate()?;
    let analyzer = Analyzer::new(config.analyzer);
    let candidates = candidate_sentences(docs, &analyzer, config.min_tokens);
    let mut sentences = Vec::with_capacity(candidates.len());
    if !candidates.is_empty() {
        let mut texts: Vec<&str> = vec![claim_text];
        texts.extend(candidates.iter().map(|c| c.text.as_str()));
        let embeddings = client.embed_sentences(&texts)?;
        let claim = &embeddings[0].vector;
        for (c, e) in candidates.into_iter().zip(&embeddings[1..]) {
            sentences.push(EvidenceSentence {
                similarity: cosine_similarity_f32(claim, &e.vector)?,
                text: c.text,
                source_doc_id: c.doc_id,
                doc_rank: c.doc_rank,
                position: c.position,
            });
        }
    }
    Ok(EvidenceSet {
        claim_id: claim_id.to_string(),
        policy: config.policy,
        sentences: select_evidence(sentences, config.policy)?,
    })
}

pub fn retrieve_evidence_flat(
    claim_id: &str,
    claim_text: &str,
    docs: &[DocumentRecord],
    n: usize,
    client: &EncoderClient,
) -> Result<EvidenceSet> {
    let config = EvidenceConfig {
        policy: SelectionPolicy::FlatTopN { n },
        ..EvidenceConfig::default()
    };
    retrieve_evidence(claim_id, claim_text, docs, &config, client)
}

pub fn retrieve_evidence_per_doc(
    claim_id: &str,
    claim_text: &str,
    docs: &[DocumentRecord],
    per_doc: usize,
    client: &EncoderClient,
) -> Result<EvidenceSet> {
    let config = EvidenceConfig {
        policy: SelectionPolicy::PerDocTopM { per_doc },
        ..EvidenceConfig::default()
    };
    retrieve_evidence(claim_id, claim_text, docs, &config, client)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(doc: &str, rank: usize, pos: usize, sim: f64) -> EvidenceSentence {
        EvidenceSentence {
            text: format!("{doc}-{pos}"),
            source_doc_id: doc.into(),
            similarity: sim,
            doc_rank: rank,
            position: pos,
        }
    }

    #[test]
    fn flat_takes_highest() {
        let pool = vec![sent("d", 0, 0, 0.3), sent("d", 0, 1, 0.9), sent("e", 1, 0, 0.1), sent("e", 1, 1, 0.8)];
        let top = select_evidence(pool.clone(), SelectionPolicy::FlatTopN { n: 2 }).unwrap();
        assert_eq!(top.iter().map(|s| s.similarity).collect::<Vec<_>>(), [0.9, 0.8]);
        let all = select_evidence(pool, SelectionPolicy::FlatTopN { n: 10 }).unwrap();
        assert_eq!(all.len(), 4);
        assert!(select_evidence(vec![], SelectionPolicy::FlatTopN { n: 0 }).is_err());
    }

    #[test]
    fn ties_follow_document_rank_then_position() {
        let pool = vec![sent("b", 1, 0, 0.5), sent("a", 0, 3, 0.5), sent("a", 0, 1, 0.5)];
        let out = select_evidence(pool, SelectionPolicy::FlatTopN { n: 3 }).unwrap();
        assert_eq!(out.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(), ["a-1", "a-3", "b-0"]);
    }

    #[test]
    fn per_doc_caps_each_document() {
        let pool = vec![sent("a", 0, 0, 0.9), sent("a", 0, 1, 0.8), sent("a", 0, 2, 0.7), sent("a", 0, 3, 0.6), sent("b", 1, 0, 0.2), sent("b", 1, 1, 0.1)];
        let out = select_evidence(pool, SelectionPolicy::PerDocTopM { per_doc: 3 }).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn short_fragments_are_not_candidates() {
        let docs = [DocumentRecord {
            id: "d".into(),
            url: String::new(),
            domain: String::new(),
            text: "Click here. Masks reduce viral transmission indoors. Yes!".into(),
        }];
        let c = candidate_sentences(&docs, &Analyzer::new(AnalyzerConfig::default()), 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].position, 1);
    }

    #[test]
    fn line_record_shape() {
        let set = EvidenceSet {
            claim_id: "c".into(),
            policy: SelectionPolicy::FlatTopN { n: 5 },
            sentences: vec![sent("d", 0, 0, 0.5)],
        };
        let v = serde_json::to_value(&set).unwrap();
        assert_eq!(v["policy"]["kind"], "flat_top_n");
        assert_eq!(v["sentences"][0].as_object().unwrap().len(), 3);
    }
}
