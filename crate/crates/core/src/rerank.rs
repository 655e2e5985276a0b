//! Multi-stage retrieval: BM25 (optionally RM3-expanded) candidates re-scored
//! by a cross-encoder relevance scorer.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{doc_id_of, PassageLookup};
use crate::encoder::EncoderClient;
use crate::error::{Error, Result};
use crate::index::{rm3_expand, Analyzer, AnalyzerConfig, Bm25Params, InvertedIndex, Rm3Params, ScoredDoc, Stage};

/// Scores a (query, passage) pair with a relevance probability in `[0, 1]`.
pub trait RelevanceScorer: Send + Sync {
    fn identity(&self) -> &str;

    fn score(&self, query: &str, passage: &str) -> Result<f64>;

    /// Batched scoring; results are index-aligned with `passages`.
    fn score_batch(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>> {
        passages.par_iter().map(|p| self.score(query, p)).collect()
    }
}

/// Score table loaded from a JSON-lines file of `{query, passage, score}`
/// records. Unknown pairs get `default` or fail.
#[derive(Debug, Clone, Default)]
pub struct FixtureScorer {
    identity: String,
    table: HashMap<(String, String), f64>,
    default: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query: String,
    pub passage: String,
    pub score: f64,
}

impl FixtureScorer {
    pub fn new(records: impl IntoIterator<Item = ScoreRecord>, default: Option<f64>) -> Result<Self> {
        let mut table = HashMap::new();
        for r in records {
            check_score(r.score).map_err(|reason| Error::invalid(format!("fixture score: {reason}")))?;
            table.insert((r.query, r.passage), r.score);
        }
        if let Some(d) = default {
            check_score(d).map_err(|reason| Error::invalid(format!("fixture default: {reason}")))?;
        }
        Ok(Self {
            identity: "fixture".into(),
            table,
            default,
        })
    }

    pub fn load(path: &Path, default: Option<f64>) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str::<ScoreRecord>(line)
                    .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?,
            );
        }
        let mut s = Self::new(records, default)?;
        s.identity = format!("fixture:{}", path.display());
        Ok(s)
    }
}

impl RelevanceScorer for FixtureScorer {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        self.table
            .get(&(query.to_string(), passage.to_string()))
            .copied()
            .or(self.default)
            .ok_or_else(|| Error::invalid("pair not in score table"))
    }
}

/// Fraction of the query's analyzed terms that occur in the passage.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    analyzer: Analyzer,
}

impl LexicalScorer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self {
            analyzer: Analyzer::new(config),
        }
    }
}

impl Default for LexicalScorer {
    fn default() -> Self {
        Self::new(AnalyzerConfig::default())
    }
}

impl RelevanceScorer for LexicalScorer {
    fn identity(&self) -> &str {
        "lexical"
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        let q: HashSet<String> = self.analyzer.analyze(query).into_iter().collect();
        if q.is_empty() {
            return Ok(0.0);
        }
        let p: HashSet<String> = self.analyzer.analyze(passage).into_iter().collect();
        Ok(q.iter().filter(|t| p.contains(*t)).count() as f64 / q.len() as f64)
    }
}

/// Relevance scores from the model service's re-ranker.
#[derive(Debug, Clone)]
pub struct EncoderScorer {
    client: Arc<EncoderClient>,
    identity: String,
}

impl EncoderScorer {
    pub fn new(client: Arc<EncoderClient>) -> Self {
        let identity = format!("service:{}", client.models().reranker);
        Self { client, identity }
    }
}

impl RelevanceScorer for EncoderScorer {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        Ok(self.client.rerank(&[(query, passage)])?[0])
    }

    fn score_batch(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>> {
        let pairs: Vec<(&str, &str)> = passages.iter().map(|p| (query, *p)).collect();
        self.client.rerank(&pairs)
    }
}

/// Wraps a closure; handy for tests and composition.
pub struct FnScorer<F> {
    identity: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&str, &str) -> Result<f64> + Send + Sync,
{
    pub fn new(identity: impl Into<String>, f: F) -> Self {
        Self {
            identity: identity.into(),
            f,
        }
    }
}

impl<F> RelevanceScorer for FnScorer<F>
where
    F: Fn(&str, &str) -> Result<f64> + Send + Sync,
{
    fn identity(&self) -> &str {
        &self.identity
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        (self.f)(query, passage)
    }
}

/// Builds a scorer from its identity string: `lexical`, `fixture:<path>`, or
/// `service:<url>` (which needs an encoder client for that service).
pub fn resolve_scorer(identity: &str, client: Option<Arc<EncoderClient>>) -> Result<Box<dyn RelevanceScorer>> {
    if identity == "lexical" {
        return Ok(Box::new(LexicalScorer::default()));
    }
    if let Some(path) = identity.strip_prefix("fixture:") {
        return Ok(Box::new(FixtureScorer::load(Path::new(path), None)?));
    }
    if identity.starts_with("service:") {
        let client = client.ok_or_else(|| Error::invalid(format!("scorer {identity} needs an encoder client")))?;
        return Ok(Box::new(EncoderScorer::new(client)));
    }
    Err(Error::invalid(format!(
        "unknown scorer {identity:?} (lexical | fixture:<path> | service:<url>)"
    )))
}

fn check_score(s: f64) -> std::result::Result<(), String> {
    if !s.is_finite() {
        Err(format!("non-finite score {s}"))
    } else if !(0.0..=1.0).contains(&s) {
        Err(format!("score {s} outside [0, 1]"))
    } else {
        Ok(())
    }
}

/// Re-scores every candidate and sorts by the new score, descending. Equal
/// scores keep their first-stage order. Any failing pair fails the call.
pub fn rerank(
    scorer: &dyn RelevanceScorer,
    query: &str,
    candidates: &[ScoredDoc],
    texts: &dyn PassageLookup,
) -> Result<Vec<ScoredDoc>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let passages: Vec<&str> = candidates
        .iter()
        .map(|c| texts.passage(&c.paragraph_id).ok_or_else(|| Error::UnknownId(c.paragraph_id.clone())))
        .collect::<Result<_>>()?;
    let fail = |i: usize, reason: String| Error::Scorer {
        scorer: scorer.identity().to_string(),
        query: query.to_string(),
        passage_id: candidates[i].paragraph_id.clone(),
        reason,
    };
    let scores = match scorer.score_batch(query, &passages) {
        Ok(s) if s.len() == passages.len() => s,
        Ok(s) => {
            return Err(Error::Service(format!(
                "scorer {} returned {} scores for {} passages",
                scorer.identity(),
                s.len(),
                passages.len()
            )))
        }
        Err(batch_err) => {
            // Find the first pair that fails on its own.
            for (i, p) in passages.iter().enumerate() {
                if let Err(e) = scorer.score(query, p) {
                    return Err(fail(i, e.to_string()));
                }
            }
            return Err(batch_err);
        }
    };
    for (i, &s) in scores.iter().enumerate() {
        check_score(s).map_err(|reason| fail(i, reason))?;
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(order
        .into_iter()
        .map(|i| ScoredDoc {
            paragraph_id: candidates[i].paragraph_id.clone(),
            score: scores[i],
            stage: Stage::Reranked,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultistageConfig {
    pub first_k: usize,
    pub final_k: usize,
    pub bm25: Bm25Params,
    /// Expansion applied to the first-stage query before re-ranking.
    pub rm3: Option<Rm3Params>,
}

impl Default for MultistageConfig {
    fn default() -> Self {
        Self {
            first_k: 100,
            final_k: 10,
            bm25: Bm25Params::default(),
            rm3: None,
        }
    }
}

/// BM25 top `first_k` (re-run with the RM3-expanded query if configured),
/// re-ranked when a scorer is given, truncated to `final_k`.
pub fn multistage_retrieve(
    index: &InvertedIndex,
    scorer: Option<&dyn RelevanceScorer>,
    texts: &dyn PassageLookup,
    query: &str,
    config: &MultistageConfig,
) -> Result<Vec<ScoredDoc>> {
    if config.final_k == 0 || config.final_k > config.first_k {
        return Err(Error::invalid(format!(
            "need 1 <= final_k <= first_k, got final_k={} first_k={}",
            config.final_k, config.first_k
        )));
    }
    let q = index.query(query)?;
    let mut first = index.search(&q, config.first_k, config.bm25)?;
    if let (Some(params), false) = (config.rm3, first.is_empty()) {
        let expanded = rm3_expand(index, &q, &first, params)?;
        first = index.search(&expanded, config.first_k, config.bm25)?;
    }
    let mut out = match scorer {
        Some(s) => rerank(s, query, &first, texts)?,
        None => first,
    };
    out.truncate(config.final_k);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub score: f64,
    /// Paragraph that produced the document's score.
    pub paragraph_id: String,
}

/// Collapses a paragraph ranking to documents, scoring each document by its
/// best paragraph. Order follows the first appearance of each document.
pub fn aggregate_documents(ranked: &[ScoredDoc]) -> Vec<DocScore> {
    let mut out: Vec<DocScore> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in ranked {
        let doc = doc_id_of(&r.paragraph_id);
        match seen.get(doc) {
            Some(&i) => {
                if r.score > out[i].score {
                    out[i].score = r.score;
                    out[i].paragraph_id = r.paragraph_id.clone();
                }
            }
            None => {
                seen.insert(doc, out.len());
                out.push(DocScore {
                    doc_id: doc.to_string(),
                    score: r.score,
                    paragraph_id: r.paragraph_id.clone(),
                });
            }
        }
    }
    // A later paragraph can raise a document's score above an earlier one.
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// 1-based rank of `doc_id` in a document list.
pub fn rank_of(docs: &[DocScore], doc_id: &str) -> Option<usize> {
    docs.iter().position(|d| d.doc_id == doc_id).map(|i| i + 1)
}
