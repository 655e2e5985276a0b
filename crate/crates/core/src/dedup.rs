//! Near-duplicate claim removal: BM25 candidates, cross-encoder similarity,
//! threshold, and a deterministic removal policy.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClaimRecord, Label};
use crate::encoder::{cosine_similarity, EncoderClient};
use crate::error::{Error, Result};
use crate::index::{AnalyzerConfig, Bm25Params, InvertedIndex};
use crate::rerank::RelevanceScorer;

/// Two claims judged similar. Stored once with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub a: String,
    pub b: String,
    pub probability: f64,
}

impl SimilarityPair {
    pub fn new(x: &str, y: &str, probability: f64) -> Result<Self> {
        if x == y {
            return Err(Error::invalid(format!("claim {x} paired with itself")));
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Ok(Self {
            a: a.to_string(),
            b: b.to_string(),
            probability,
        })
    }

    pub fn other(&self, id: &str) -> &str {
        if self.a == id {
            &self.b
        } else {
            &self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupPreset {
    Large,
    Small,
    Custom,
}

impl FromStr for DedupPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "large" => Ok(DedupPreset::Large),
            "small" => Ok(DedupPreset::Small),
            "custom" => Ok(DedupPreset::Custom),
            other => Err(format!("unknown preset {other:?} (large|small)")),
        }
    }
}

impl fmt::Display for DedupPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DedupPreset::Large => "large",
            DedupPreset::Small => "small",
            DedupPreset::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Pairs with probability `>= threshold` count as duplicates.
    pub threshold: f64,
    pub candidate_k: usize,
    pub preset: DedupPreset,
}

impl DedupConfig {
    pub const LARGE_THRESHOLD: f64 = 0.99;
    pub const SMALL_THRESHOLD: f64 = 0.90;
    pub const DEFAULT_CANDIDATE_K: usize = 20;

    /// Removes only near-certain duplicates; keeps more claims.
    pub fn large() -> Self {
        Self {
            threshold: Self::LARGE_THRESHOLD,
            candidate_k: Self::DEFAULT_CANDIDATE_K,
            preset: DedupPreset::Large,
        }
    }

    /// Also removes looser paraphrases; keeps fewer claims.
    pub fn small() -> Self {
        Self {
            threshold: Self::SMALL_THRESHOLD,
            candidate_k: Self::DEFAULT_CANDIDATE_K,
            preset: DedupPreset::Small,
        }
    }

    pub fn custom(threshold: f64, candidate_k: usize) -> Result<Self> {
        let c = Self {
            threshold,
            candidate_k,
            preset: DedupPreset::Custom,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn preset(preset: DedupPreset) -> Result<Self> {
        match preset {
            DedupPreset::Large => Ok(Self::large()),
            DedupPreset::Small => Ok(Self::small()),
            DedupPreset::Custom => Err(Error::invalid("custom preset needs an explicit threshold")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::invalid(format!("threshold must be in (0, 1], got {}", self.threshold)));
        }
        if self.candidate_k == 0 {
            return Err(Error::invalid("candidate_k must be at least 1"));
        }
        Ok(())
    }
}

/// Indexes claim texts under their ids.
pub fn build_claim_index(claims: &[ClaimRecord], config: AnalyzerConfig) -> Result<InvertedIndex> {
    InvertedIndex::build(claims.iter().map(|c| (c.id.clone(), c.text.as_str())), config)
}

/// Scores every candidate pair once: each claim queries the claim index for
/// `candidate_k` neighbours (itself excluded), and each distinct canonical
/// pair is scored with the lower id's text as query.
pub fn score_candidate_pairs(
    claims: &[ClaimRecord],
    index: &InvertedIndex,
    scorer: &dyn RelevanceScorer,
    candidate_k: usize,
    bm25: Bm25Params,
) -> Result<Vec<SimilarityPair>> {
    if candidate_k == 0 {
        return Err(Error::invalid("candidate_k must be at least 1"));
    }
    let by_id: HashMap<&str, &ClaimRecord> = claims.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut candidates: BTreeSet<(String, String)> = BTreeSet::new();
    for c in claims {
        let query = match index.query(&c.text) {
            Ok(q) => q,
            Err(Error::EmptyQuery) => continue,
            Err(e) => return Err(e),
        };
        // One extra hit leaves room for the claim itself.
        let hits = index.search(&query, candidate_k + 1, bm25)?;
        for hit in hits.into_iter().filter(|h| h.paragraph_id != c.id).take(candidate_k) {
            if !by_id.contains_key(hit.paragraph_id.as_str()) {
                return Err(Error::UnknownId(hit.paragraph_id));
            }
            let (a, b) = if c.id < hit.paragraph_id {
                (c.id.clone(), hit.paragraph_id)
            } else {
                (hit.paragraph_id, c.id.clone())
            };
            candidates.insert((a, b));
        }
    }
    let candidates: Vec<(String, String)> = candidates.into_iter().collect();
    candidates
        .par_iter()
        .map(|(a, b)| {
            let p = scorer
                .score(&by_id[a.as_str()].text, &by_id[b.as_str()].text)
                .and_then(|p| {
                    if p.is_finite() && (0.0..=1.0).contains(&p) {
                        Ok(p)
                    } else {
                        Err(Error::Service(format!("similarity {p} outside [0, 1]")))
                    }
                })
                .map_err(|e| Error::Scorer {
                    scorer: scorer.identity().to_string(),
                    query: a.clone(),
                    passage_id: b.clone(),
                    reason: e.to_string(),
                })?;
            Ok(SimilarityPair {
                a: a.clone(),
                b: b.clone(),
                probability: p,
            })
        })
        .collect()
}

/// Pairs at or above `threshold`.
pub fn filter_pairs(pairs: &[SimilarityPair], threshold: f64) -> Vec<SimilarityPair> {
    pairs.iter().filter(|p| p.probability >= threshold).cloned().collect()
}

/// Candidate retrieval, scoring and thresholding in one call.
pub fn find_similar_pairs(
    claims: &[ClaimRecord],
    index: &InvertedIndex,
    scorer: &dyn RelevanceScorer,
    config: &DedupConfig,
    bm25: Bm25Params,
) -> Result<Vec<SimilarityPair>> {
    config.validate()?;
    let scored = score_candidate_pairs(claims, index, scorer, config.candidate_k, bm25)?;
    Ok(filter_pairs(&scored, config.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupPolicy {
    /// Scan ids in order; drop a claim paired with an already kept claim.
    GreedyFirstKept,
    /// Keep the smallest id of each connected component of the pair graph.
    ClusterRepresentative,
}

impl FromStr for DedupPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "greedy_first_kept" | "greedy" => Ok(DedupPolicy::GreedyFirstKept),
            "cluster_representative" | "cluster" => Ok(DedupPolicy::ClusterRepresentative),
            other => Err(format!("unknown policy {other:?} (greedy|cluster)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    #[serde(rename = "True")]
    pub true_count: usize,
    #[serde(rename = "False")]
    pub false_count: usize,
    pub total: usize,
}

impl LabelCounts {
    pub fn of<'a>(claims: impl IntoIterator<Item = &'a ClaimRecord>) -> Self {
        let mut c = Self::default();
        for claim in claims {
            match claim.label {
                Label::True => c.true_count += 1,
                Label::False => c.false_count += 1,
            }
            c.total += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    /// Pair linking the removed claim to the claim that caused its removal.
    pub trigger: SimilarityPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub policy: DedupPolicy,
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
    pub before: LabelCounts,
    pub after: LabelCounts,
}

impl DedupReport {
    pub fn kept_set(&self) -> BTreeSet<&str> {
        self.kept.iter().map(String::as_str).collect()
    }

    /// Line records: one `kept`/`removed` record per claim, then a summary.
    pub fn to_records(&self) -> Vec<serde_json::Value> {
        let mut out: Vec<serde_json::Value> = Vec::with_capacity(self.kept.len() + self.removed.len() + 1);
        for id in &self.kept {
            out.push(serde_json::json!({"record": "kept", "id": id}));
        }
        for r in &self.removed {
            out.push(serde_json::json!({"record": "removed", "id": r.id, "trigger": r.trigger}));
        }
        out.push(serde_json::json!({
            "record": "summary",
            "policy": self.policy,
            "before": self.before,
            "after": self.after,
        }));
        out
    }
}

/// Applies a removal policy. Pairs must reference ids among `claims`.
pub fn deduplicate(claims: &[ClaimRecord], pairs: &[SimilarityPair], policy: DedupPolicy) -> Result<DedupReport> {
    let mut ids: Vec<&str> = claims.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateId(w[0].to_string()));
    }
    let known: BTreeSet<&str> = ids.iter().copied().collect();
    let mut adjacency: BTreeMap<&str, Vec<&SimilarityPair>> = BTreeMap::new();
    for p in pairs {
        for id in [&p.a, &p.b] {
            if !known.contains(id.as_str()) {
                return Err(Error::UnknownId(id.clone()));
            }
        }
        if p.a == p.b {
            return Err(Error::invalid(format!("claim {} paired with itself", p.a)));
        }
        adjacency.entry(p.a.as_str()).or_default().push(p);
        adjacency.entry(p.b.as_str()).or_default().push(p);
    }
    for list in adjacency.values_mut() {
        list.sort_by(|x, y| (x.a.as_str(), x.b.as_str()).cmp(&(y.a.as_str(), y.b.as_str())));
    }
    let neighbours = |id: &str| adjacency.get(id).map(Vec::as_slice).unwrap_or(&[]);

    let mut kept: Vec<String> = Vec::new();
    let mut removed: Vec<Removal> = Vec::new();
    match policy {
        DedupPolicy::GreedyFirstKept => {
            let mut kept_set: BTreeSet<&str> = BTreeSet::new();
            for &id in &ids {
                // Trigger: the pair with the smallest already-kept partner.
                let trigger = neighbours(id)
                    .iter()
                    .filter(|p| kept_set.contains(p.other(id)))
                    .min_by(|x, y| x.other(id).cmp(y.other(id)));
                match trigger {
                    Some(p) => removed.push(Removal {
                        id: id.to_string(),
                        trigger: (*p).clone(),
                    }),
                    None => {
                        kept_set.insert(id);
                        kept.push(id.to_string());
                    }
                }
            }
        }
        DedupPolicy::ClusterRepresentative => {
            // Breadth-first from each unvisited id in order; the start is the
            // component's smallest id and every other member records the edge
            // it was reached by.
            let mut visited: BTreeSet<&str> = BTreeSet::new();
            for &root in &ids {
                if !visited.insert(root) {
                    continue;
                }
                kept.push(root.to_string());
                let mut queue = std::collections::VecDeque::from([root]);
                while let Some(cur) = queue.pop_front() {
                    for p in neighbours(cur) {
                        let next = p.other(cur);
                        if visited.insert(next) {
                            removed.push(Removal {
                                id: next.to_string(),
                                trigger: (*p).clone(),
                            });
                            queue.push_back(next);
                        }
                    }
                }
            }
            removed.sort_by(|x, y| x.id.cmp(&y.id));
        }
    }
    let kept_lookup: BTreeSet<&str> = kept.iter().map(String::as_str).collect();
    Ok(DedupReport {
        policy,
        before: LabelCounts::of(claims),
        after: LabelCounts::of(claims.iter().filter(|c| kept_lookup.contains(c.id.as_str()))),
        kept,
        removed,
    })
}

/// Pairs whose both ends are in `ids`.
pub fn restrict_pairs(pairs: &[SimilarityPair], ids: &BTreeSet<&str>) -> Vec<SimilarityPair> {
    pairs
        .iter()
        .filter(|p| ids.contains(p.a.as_str()) && ids.contains(p.b.as_str()))
        .cloned()
        .collect()
}

/// Per-label claim counts for the original collection and both presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupSummary {
    pub original: LabelCounts,
    pub large: LabelCounts,
    pub small: LabelCounts,
}

impl DedupSummary {
    pub fn table(&self) -> String {
        let mut s = String::from("label   original    large    small\n");
        let rows = [
            ("True", self.original.true_count, self.large.true_count, self.small.true_count),
            ("False", self.original.false_count, self.large.false_count, self.small.false_count),
            ("Total", self.original.total, self.large.total, self.small.total),
        ];
        for (name, o, l, sm) in rows {
            s.push_str(&format!("{name:<6}{o:>10}{l:>9}{sm:>9}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean: f64,
    pub std: f64,
    pub p90: f64,
    pub n: usize,
}

/// Neumaier-compensated sum as an unevaluated pair `hi + lo`.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    let hi = sum + c;
    (hi, c - (hi - sum))
}

/// Mean of `values` rounded once from the compensated sum, so short inputs
/// such as `[0.2, 0.4, 0.6]` give the decimal answer.
fn accurate_mean(values: impl IntoIterator<Item = f64>, n: usize) -> f64 {
    let (hi, lo) = compensated_sum(values);
    let n = n as f64;
    let q = hi / n;
    let r = (-q).mul_add(n, hi) + lo;
    q + r / n
}

/// Sample mean, sample standard deviation and nearest-rank 90th percentile.
pub fn summarize(values: &[f64]) -> Result<SimilarityStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity value".into()));
    }
    let mean = accurate_mean(values.iter().copied(), n);
    let var = accurate_mean(values.iter().map(|v| (v - mean) * (v - mean)), n - 1);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (0.9 * n as f64).ceil() as usize;
    Ok(SimilarityStats {
        mean,
        std: var.sqrt(),
        p90: sorted[rank.clamp(1, n) - 1],
        n,
    })
}

/// For each claim, its highest score against any other claim.
pub fn max_similarities<F>(texts: &[&str], score: F) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if texts.len() < 2 {
        return Err(Error::invalid("need at least 2 claims"));
    }
    (0..texts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::NEG_INFINITY;
            for j in 0..texts.len() {
                if j != i {
                    best = best.max(score(i, j)?);
                }
            }
            Ok(best)
        })
        .collect()
}

/// Uniqueness statistics of a claim collection under a pair scorer.
pub fn similarity_stats<F>(texts: &[&str], score: F) -> Result<SimilarityStats>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    summarize(&max_similarities(texts, |i, j| score(texts[i], texts[j]))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `(f1 - baseline) / (1 - baseline)`.
    pub rescaled: f64,
}

/// Greedy token matching by cosine similarity between two token-vector sequences.
pub fn bertscore_f1<A, B>(candidate: &[A], reference: &[B], baseline: f64) -> Result<BertScore>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::invalid("bertscore needs non-empty token sequences"));
    }
    if !(0.0..1.0).contains(&baseline) {
        return Err(Error::invalid(format!("baseline must be in [0, 1), got {baseline}")));
    }
    let mut sims = vec![vec![0.0; reference.len()]; candidate.len()];
    for (i, c) in candidate.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            sims[i][j] = cosine_similarity(c.as_ref(), r.as_ref())?;
        }
    }
    let precision = candidate
        .iter()
        .enumerate()
        .map(|(i, _)| sims[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BertScore {
        precision,
        recall,
        f1,
        rescaled: (f1 - baseline) / (1.0 - baseline),
    })
}

/// BERTScore-based uniqueness statistics: every claim is encoded on its own
/// and compared with every other claim.
pub fn bertscore_similarity_stats(
    claims: &[ClaimRecord],
    client: &EncoderClient,
    baseline: f64,
) -> Result<SimilarityStats> {
    let texts: Vec<&str> = claims.iter().map(|c| c.text.as_str()).collect();
    let encodings = client.encode_singles(&texts)?;
    let rows: Vec<Vec<Vec<f64>>> = encodings
        .iter()
        .map(|e| {
            (0..e.token_count())
                .map(|t| e.token(t).iter().map(|&v| v as f64).collect())
                .collect()
        })
        .collect();
    summarize(&max_similarities(&texts, |i, j| Ok(bertscore_f1(&rows[i], &rows[j], baseline)?.rescaled))?)
}
