use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InvertedIndex, Query, ScoredDoc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub original_weight: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Self {
            fb_docs: 10,
            fb_terms: 10,
            original_weight: 0.5,
        }
    }
}

/// Relevance-model query expansion from pseudo-relevant feedback paragraphs.
///
/// Feedback paragraph `d` gets weight `softmax(score)_d` over the top
/// `fb_docs` paragraphs; term probability is `Σ_d weight_d · tf(t,d)/len(d)`.
/// The `fb_terms` most probable non-stopword terms are renormalised and mixed
/// with the normalised original query. Output weights sum to 1.
pub fn rm3_expand(
    index: &InvertedIndex,
    query: &Query,
    feedback: &[ScoredDoc],
    params: Rm3Params,
) -> Result<Query> {
    if params.fb_docs < 1 || params.fb_terms < 1 {
        return Err(Error::invalid("fb_docs and fb_terms must be at least 1"));
    }
    if !(0.0..=1.0).contains(&params.original_weight) {
        return Err(Error::invalid(format!(
            "original_weight must be in [0, 1], got {}",
            params.original_weight
        )));
    }
    if feedback.is_empty() {
        return Err(Error::invalid("feedback list is empty"));
    }
    if query.total_weight() <= 0.0 {
        return Err(Error::EmptyQuery);
    }
    let original = query.normalized();
    if params.original_weight == 1.0 {
        return Ok(original);
    }

    let fb: Vec<(u32, f64)> = feedback
        .iter()
        .take(params.fb_docs)
        .map(|d| {
            index
                .doc_number(&d.paragraph_id)
                .map(|n| (n, d.score))
                .ok_or_else(|| Error::UnknownId(d.paragraph_id.clone()))
        })
        .collect::<Result<_>>()?;
    let max_score = fb.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = fb.iter().map(|&(_, s)| (s - max_score).exp()).collect();
    let z: f64 = exp.iter().sum();

    let mut model: BTreeMap<u32, f64> = BTreeMap::new();
    for (&(doc, _), e) in fb.iter().zip(&exp) {
        let len = index.doc_lengths()[doc as usize];
        if len == 0 {
            continue;
        }
        let doc_weight = e / z;
        for &(term, tf) in index.forward(doc) {
            *model.entry(term).or_insert(0.0) += doc_weight * tf as f64 / len as f64;
        }
    }

    let analyzer = index.analyzer();
    let mut ranked: Vec<(&str, f64)> = model
        .into_iter()
        .map(|(t, p)| (index.term(t), p))
        .filter(|&(t, p)| p > 0.0 && !analyzer.is_stopword(t))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(params.fb_terms);
    let mass: f64 = ranked.iter().map(|&(_, p)| p).sum();
    if mass <= 0.0 {
        return Ok(original);
    }

    let alpha = params.original_weight;
    let mut out: BTreeMap<String, f64> = original
        .terms()
        .iter()
        .map(|(t, w)| (t.clone(), alpha * w))
        .collect();
    for (t, p) in ranked {
        *out.entry(t.to_string()).or_insert(0.0) += (1.0 - alpha) * p / mass;
    }
    out.retain(|_, w| *w > 0.0);
    Query::from_weights(out)
}
