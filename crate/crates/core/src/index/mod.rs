//! Inverted index over paragraphs, BM25 ranking and RM3 query expansion.
//!
//! Internal document numbers follow ascending paragraph id, so posting lists
//! sorted by number are also sorted by id and every tie-break on id can be
//! done on the number.

mod analyzer;
mod persist;
mod rm3;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use analyzer::{Analyzer, AnalyzerConfig};
pub use persist::{read_index, write_index, INDEX_FORMAT_VERSION};
pub use rm3::{rm3_expand, Rm3Params};

use crate::corpus::Paragraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Bm25,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub paragraph_id: String,
    pub score: f64,
    pub stage: Stage,
}

/// Weighted bag of analyzed terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    terms: BTreeMap<String, f64>,
}

impl Query {
    /// Each analyzed occurrence contributes weight 1.
    pub fn from_text(text: &str, analyzer: &Analyzer) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for t in analyzer.analyze(text) {
            *terms.entry(t).or_insert(0.0) += 1.0;
        }
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(Self { terms })
    }

    pub fn from_weights<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut terms = BTreeMap::new();
        for (t, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("query weight must be finite and >= 0, got {w}")));
            }
            *terms.entry(t.into()).or_insert(0.0) += w;
        }
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &BTreeMap<String, f64> {
        &self.terms
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.terms.get(term).copied().unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.values().sum()
    }

    /// Weights rescaled to sum to 1.
    pub fn normalized(&self) -> Query {
        let total = self.total_weight();
        if total <= 0.0 {
            return self.clone();
        }
        Query {
            terms: self.terms.iter().map(|(t, w)| (t.clone(), w / total)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    analyzer: Analyzer,
    ids: Vec<String>,
    id_lookup: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    terms: Vec<String>,
    term_lookup: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    /// Per document: (term number, tf) in ascending term number.
    forward: Vec<Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Indexes `(id, text)` units. Ids must be unique.
    pub fn build<I, S, T>(units: I, config: AnalyzerConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let analyzer = Analyzer::new(config);
        let mut analyzed: Vec<(String, Vec<String>)> = units
            .into_iter()
            .map(|(id, text)| (id.into(), analyzer.analyze(text.as_ref())))
            .collect();
        analyzed.sort_by(|a, b| a.0.cmp(&b.0));
        for w in analyzed.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateId(w[0].0.clone()));
            }
        }

        let mut term_docs: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(analyzed.len());
        for (doc, (_, tokens)) in analyzed.iter().enumerate() {
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, tf) in counts {
                term_docs.entry(t.to_string()).or_default().push(Posting { doc: doc as u32, tf });
            }
        }
        let ids = analyzed.into_iter().map(|(id, _)| id).collect();
        let (terms, postings): (Vec<_>, Vec<_>) = term_docs.into_iter().unzip();
        Ok(Self::assemble(analyzer, ids, doc_lengths, terms, postings))
    }

    pub(crate) fn assemble(
        analyzer: Analyzer,
        ids: Vec<String>,
        doc_lengths: Vec<u32>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
    ) -> Self {
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        let mut forward = vec![Vec::new(); ids.len()];
        for (term, plist) in postings.iter().enumerate() {
            for p in plist {
                forward[p.doc as usize].push((term as u32, p.tf));
            }
        }
        Self {
            analyzer,
            id_lookup: ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect(),
            term_lookup: terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect(),
            ids,
            doc_lengths,
            avg_doc_length,
            terms,
            postings,
            forward,
        }
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.id_lookup.get(id).map(|&d| self.doc_lengths[d as usize])
    }

    pub(crate) fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub(crate) fn doc_number(&self, id: &str) -> Option<u32> {
        self.id_lookup.get(id).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Posting list of a term as `(paragraph_id, tf)` pairs.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.term_lookup
            .get(term)
            .map(|&t| {
                self.postings[t as usize]
                    .iter()
                    .map(|p| (self.ids[p.doc as usize].as_str(), p.tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub(crate) fn raw_postings(&self) -> &[Vec<Posting>] {
        &self.postings
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.term_lookup
            .get(term)
            .map_or(0, |&t| self.postings[t as usize].len())
    }

    pub(crate) fn forward(&self, doc: u32) -> &[(u32, u32)] {
        &self.forward[doc as usize]
    }

    pub(crate) fn term(&self, term: u32) -> &str {
        &self.terms[term as usize]
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.doc_freq(term))
    }

    /// Analyzes free text into a plain query.
    pub fn query(&self, text: &str) -> Result<Query> {
        Query::from_text(text, &self.analyzer)
    }

    /// Top-`k` paragraphs by BM25. Zero-score paragraphs are omitted; ties
    /// go to the smaller paragraph id.
    pub fn search(&self, query: &Query, k: usize, params: Bm25Params) -> Result<Vec<ScoredDoc>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        params.validate()?;
        if query.terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let n = self.doc_count();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut scores = vec![0.0f64; n];
        for (term, &weight) in &query.terms {
            let Some(&t) = self.term_lookup.get(term) else {
                continue;
            };
            let plist = &self.postings[t as usize];
            let idf = bm25_idf(n, plist.len());
            for p in plist {
                let len = self.doc_lengths[p.doc as usize] as f64;
                scores[p.doc as usize] +=
                    weight * idf * bm25_tf(p.tf as f64, len, self.avg_doc_length, params);
            }
        }
        let mut hits: Vec<(u32, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (d as u32, s))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(d, score)| ScoredDoc {
                paragraph_id: self.ids[d as usize].clone(),
                score,
                stage: Stage::Bm25,
            })
            .collect())
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Saturated term-frequency component.
pub fn bm25_tf(tf: f64, doc_len: f64, avg_len: f64, params: Bm25Params) -> f64 {
    let norm = if avg_len > 0.0 { doc_len / avg_len } else { 0.0 };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

/// Indexes paragraphs under their `<doc_id>#<ordinal>` ids.
pub fn build_index(paragraphs: &[Paragraph], config: AnalyzerConfig) -> Result<InvertedIndex> {
    InvertedIndex::build(
        paragraphs.iter().map(|p| (p.paragraph_id(), p.text.as_str())),
        config,
    )
}

pub fn bm25_search(
    index: &InvertedIndex,
    query: &Query,
    k: usize,
    params: Bm25Params,
) -> Result<Vec<ScoredDoc>> {
    index.search(query, k, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(docs: &[(&str, &str)]) -> InvertedIndex {
        InvertedIndex::build(docs.iter().copied(), AnalyzerConfig::default()).unwrap()
    }

    #[test]
    fn empty_corpus() {
        let index = idx(&[]);
        assert_eq!(index.doc_count(), 0);
        let q = Query::from_weights([("cat", 1.0)]).unwrap();
        assert!(index.search(&q, 10, Bm25Params::default()).unwrap().is_empty());
    }

    #[test]
    fn postings_by_counting() {
        let index = idx(&[("p1", "cat sat"), ("p2", "cat")]);
        assert_eq!(index.postings("cat"), vec![("p1", 1), ("p2", 1)]);
        assert_eq!(index.postings("sat"), vec![("p1", 1)]);
        assert_eq!(index.avg_doc_length(), 1.5);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = InvertedIndex::build([("a", "x"), ("a", "y")], AnalyzerConfig::default());
        assert!(matches!(err, Err(Error::DuplicateId(_))));
    }

    #[test]
    fn cat_ranking() {
        let index = idx(&[("d1", "cat sat mat"), ("d2", "dog sat log"), ("d3", "cat cat cat")]);
        let q = index.query("cat").unwrap();
        let hits = index.search(&q, 10, Bm25Params { k1: 0.9, b: 0.4 }).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.paragraph_id.as_str()).collect();
        assert_eq!(ids, vec!["d3", "d1"]);
        // hand computation: N=3, df=2, avg=3, all lengths 3
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let d3 = idf * 3.0 * 1.9 / (3.0 + 0.9);
        let d1 = idf * 1.0 * 1.9 / (1.0 + 0.9);
        assert!((hits[0].score - d3).abs() < 1e-12);
        assert!((hits[1].score - d1).abs() < 1e-12);
    }

    #[test]
    fn absent_term_and_bad_params() {
        let index = idx(&[("d1", "cat")]);
        let q = Query::from_weights([("zebra", 1.0)]).unwrap();
        assert!(index.search(&q, 5, Bm25Params::default()).unwrap().is_empty());
        let q = index.query("cat").unwrap();
        assert!(index.search(&q, 0, Bm25Params::default()).is_err());
        assert!(index.search(&q, 1, Bm25Params { k1: 0.0, b: 0.4 }).is_err());
        assert!(index.search(&q, 1, Bm25Params { k1: 1.0, b: 1.5 }).is_err());
        assert!(matches!(index.query("the of and"), Err(Error::EmptyQuery)));
    }

    #[test]
    fn ties_break_on_id() {
        let index = idx(&[("b", "flu"), ("a", "flu"), ("c", "flu")]);
        let q = index.query("flu").unwrap();
        let hits = index.search(&q, 2, Bm25Params::default()).unwrap();
        assert_eq!(hits[0].paragraph_id, "a");
        assert_eq!(hits[1].paragraph_id, "b");
    }

    proptest! {
        // adding an occurrence of a query term (with length normalisation held
        // fixed, i.e. b = 0) never lowers the score
        #[test]
        fn tf_monotone(tf in 0u32..50, len in 1u32..200, avg in 1.0f64..100.0, k1 in 0.1f64..3.0) {
            let p = Bm25Params { k1, b: 0.0 };
            let lo = bm25_tf(tf as f64, len as f64, avg, p);
            let hi = bm25_tf(tf as f64 + 1.0, len as f64, avg, p);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn idf_non_negative(n in 0usize..10_000, df_frac in 0.0f64..=1.0) {
            let df = (n as f64 * df_frac) as usize;
            prop_assert!(bm25_idf(n, df) >= 0.0);
        }
    }
}
