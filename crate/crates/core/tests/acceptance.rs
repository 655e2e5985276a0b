//! Acceptance suite: one PASS/FAIL line per top-level criterion.
//!
//! Runs without a test harness so the summary lines always reach the output.
//! Exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use veracity::corpus::{ClaimRecord, DocumentRecord, Label, ParagraphStore, WhitespaceCounter};
use veracity::dedup::{deduplicate, filter_pairs, restrict_pairs, summarize, DedupConfig, DedupPolicy, SimilarityPair};
use veracity::encoder::{CacheMode, EncoderCache, EncoderClient, FixtureEncoder, FixtureNli, NliTriplet};
use veracity::index::{rm3_expand, AnalyzerConfig, Bm25Params, InvertedIndex, Query, Rm3Params};
use veracity::nn::{gcn_layer, grad_check, grad_check_params, linear, scaled_dot_attention, Tape, Tensor, Var};
use veracity::pipeline::{build_corpus_index, build_paragraphs, Pipeline, PipelineConfig};
use veracity::rerank::LexicalScorer;
use veracity::verdict::{
    ap_at_k, build_evidence_graph, claim_features, classification_metrics, kfold_evaluate, train, ClaimFeatures,
    EvidenceGraph, Example, FeatureConfig, HeadConfig, HeadKind, Model, PairFeatures, TrainConfig,
};
use veracity::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn check(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_triplet(rng: &mut ChaCha8Rng) -> NliTriplet {
    let x: [f64; 3] = [rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)];
    let s: f64 = x.iter().sum();
    NliTriplet::new(x[0] / s, x[1] / s, x[2] / s).unwrap()
}

// ---------------------------------------------------------------- BM25

const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ru", "te", "vo", "zan", "pel", "dor", "gis", "hu", "bre"];

fn random_word(rng: &mut ChaCha8Rng, vocab: usize) -> String {
    // Skewed draw so some terms are frequent and some rare.
    let r: f64 = rng.gen();
    let i = ((r * r) * vocab as f64) as usize;
    let a = SYLLABLES[i % SYLLABLES.len()];
    let b = SYLLABLES[(i / SYLLABLES.len()) % SYLLABLES.len()];
    format!("{a}{b}x")
}

fn random_corpus(rng: &mut ChaCha8Rng, paragraphs: usize) -> Vec<(String, String)> {
    let vocab = rng.gen_range(20..140);
    (0..paragraphs)
        .map(|i| {
            let len = rng.gen_range(1..40);
            let text: Vec<String> = (0..len).map(|_| random_word(rng, vocab)).collect();
            (format!("p{i:05}"), text.join(" "))
        })
        .collect()
}

/// Scores every paragraph from scratch with the textbook formula.
fn exhaustive_bm25(corpus: &[(String, String)], index: &InvertedIndex, query: &Query, k: usize, p: Bm25Params) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|(_, t)| index.analyzer().analyze(t)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut scored: Vec<(String, f64)> = Vec::new();
    for ((id, _), doc) in corpus.iter().zip(&docs) {
        let mut score = 0.0;
        for (term, w) in query.terms() {
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let tf = doc.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc.len() as f64 / avg));
            score += w * idf * norm;
        }
        if score > 0.0 {
            scored.push((id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn bm25_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    let mut queries = 0;
    for _ in 0..50 {
        let size = rng.gen_range(1..=1000);
        let corpus = random_corpus(&mut rng, size);
        let index = InvertedIndex::build(corpus.iter().map(|(i, t)| (i.as_str(), t.as_str())), AnalyzerConfig::default()).unwrap();
        let params = Bm25Params {
            k1: rng.gen_range(0.1..2.0),
            b: rng.gen_range(0.0..=1.0),
        };
        for _ in 0..4 {
            let words: Vec<String> = (0..rng.gen_range(1..6)).map(|_| random_word(&mut rng, 150)).collect();
            let Ok(query) = index.query(&words.join(" ")) else { continue };
            let k = rng.gen_range(1..=120);
            let got = index.search(&query, k, params).unwrap();
            let want = exhaustive_bm25(&corpus, &index, &query, k, params);
            queries += 1;
            if got.len() != want.len() {
                mismatches += 1;
                continue;
            }
            for (g, (id, s)) in got.iter().zip(&want) {
                if &g.paragraph_id != id {
                    mismatches += 1;
                }
                worst = worst.max((g.score - s).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        mismatches == 0 && worst <= 1e-9 && within(elapsed, 30),
        format!("{queries} queries on 50 corpora, {mismatches} rank mismatches, max score diff {worst:.1e}, {elapsed:.1?}"),
    )
}

// ---------------------------------------------------------------- RM3

fn rm3_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_sum = 0.0f64;
    let mut endpoint_ok = true;
    for _ in 0..40 {
        let size = rng.gen_range(5..200);
        let corpus = random_corpus(&mut rng, size);
        let index = InvertedIndex::build(corpus.iter().map(|(i, t)| (i.as_str(), t.as_str())), AnalyzerConfig::default()).unwrap();
        let words: Vec<String> = (0..rng.gen_range(1..5)).map(|_| random_word(&mut rng, 60)).collect();
        let Ok(query) = index.query(&words.join(" ")) else { continue };
        let feedback = index.search(&query, 20, Bm25Params::default()).unwrap();
        if feedback.is_empty() {
            continue;
        }
        let params = Rm3Params {
            fb_docs: rng.gen_range(1..12),
            fb_terms: rng.gen_range(1..12),
            original_weight: rng.gen_range(0.0..1.0),
        };
        let expanded = rm3_expand(&index, &query, &feedback, params).unwrap();
        worst_sum = worst_sum.max((expanded.total_weight() - 1.0).abs());
        let endpoint = rm3_expand(&index, &query, &feedback, Rm3Params { original_weight: 1.0, ..params }).unwrap();
        endpoint_ok &= endpoint == query.normalized();
    }

    let docs = [
        ("d1", "volcano ash cloud aviation"),
        ("d2", "volcano ash eruption lava"),
        ("d3", "volcano ash village evacuation"),
    ];
    let index = InvertedIndex::build(docs.iter().copied(), AnalyzerConfig::default()).unwrap();
    let query = index.query("volcano").unwrap();
    let feedback = index.search(&query, 3, Bm25Params::default()).unwrap();
    let expanded = rm3_expand(
        &index,
        &query,
        &feedback,
        Rm3Params {
            fb_docs: 3,
            fb_terms: 2,
            original_weight: 0.5,
        },
    )
    .unwrap();
    let shared = expanded.weight("ash") > 0.0 && expanded.weight("aviation") == 0.0;
    let elapsed = start.elapsed();
    Outcome::check(
        worst_sum <= 1e-9 && endpoint_ok && shared && within(elapsed, 5),
        format!(
            "max |sum-1| {worst_sum:.1e}, endpoint {}, shared term weight {:.4}, {elapsed:.1?}",
            if endpoint_ok { "ok" } else { "differs" },
            expanded.weight("ash")
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn probe(tape: &mut Tape, y: Var, rng_seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = tape.leaf(random_tensor(&mut rng, shape[1], 1));
    let col = tape.matmul(y, w)?;
    let ones = tape.leaf(Tensor::filled(1, shape[0], 1.0));
    tape.matmul(ones, col)
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.4) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

fn random_graph(rng: &mut ChaCha8Rng, d: usize, nodes: usize) -> EvidenceGraph {
    let embs: Vec<Vec<f32>> = (0..nodes).map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
    let feats: Vec<Vec<f64>> = (0..nodes)
        .map(|_| {
            let mut row: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            row.extend(random_triplet(rng).as_array());
            row
        })
        .collect();
    build_evidence_graph(&embs[0], &embs[1..], &feats[0], &feats[1..], 0.0).unwrap()
}

fn san_features(rng: &mut ChaCha8Rng, d: usize, pairs: usize, tokens: usize) -> ClaimFeatures {
    ClaimFeatures {
        pairs: (0..pairs)
            .map(|_| PairFeatures {
                tokens: Some(Arc::new(random_tensor(rng, tokens, d))),
                pooled: Some(Arc::new(random_tensor(rng, 1, d))),
                nli: random_triplet(rng),
            })
            .collect(),
        graph: None,
    }
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (d, n, tokens, nodes) = (8, 3, 12, 6);
    let h = 1e-6;
    let mut errs: Vec<(&str, f64)> = Vec::new();

    let inputs = [random_tensor(&mut rng, tokens, d), random_tensor(&mut rng, d, d), random_tensor(&mut rng, 1, d)];
    errs.push(("linear", grad_check(&inputs, h, |t, v| {
        let y = linear(t, v[0], v[1], v[2])?;
        probe(t, y, 1)
    }).unwrap()));

    let logits = [random_tensor(&mut rng, 1, 2).scale(3.0)];
    errs.push(("softmax+ce", grad_check(&logits, h, |t, v| {
        let p = t.softmax(v[0]);
        t.cross_entropy(p, 1)
    }).unwrap()));

    let inputs = [random_tensor(&mut rng, 1, d), random_tensor(&mut rng, tokens, d), random_tensor(&mut rng, tokens, d)];
    errs.push(("attention", grad_check(&inputs, h, |t, v| {
        let y = scaled_dot_attention(t, v[0], v[1], v[2], None)?;
        probe(t, y, 2)
    }).unwrap()));

    let adj = random_adjacency(&mut rng, nodes);
    let inputs = [random_tensor(&mut rng, nodes, d + 3), random_tensor(&mut rng, d + 3, d)];
    errs.push(("gcn", grad_check(&inputs, h, |t, v| {
        let y = gcn_layer(t, v[0], &adj, v[1])?;
        probe(t, y, 3)
    }).unwrap()));

    let san = Model::new(HeadConfig::new(HeadKind::NliSan, d).with_pairs(n), 5).unwrap();
    let f = san_features(&mut rng, d, n, tokens);
    errs.push(("nli-san head", grad_check_params(&san.params, h, |t, s| {
        let p = san.head.forward(t, s, &f)?;
        t.cross_entropy(p, 1)
    }).unwrap()));

    let graph = Model::new(HeadConfig::new(HeadKind::NliGraph, d), 6).unwrap();
    let g = ClaimFeatures {
        pairs: vec![],
        graph: Some(random_graph(&mut rng, d, nodes)),
    };
    errs.push(("nli-graph head", grad_check_params(&graph.params, h, |t, s| {
        let p = graph.head.forward(t, s, &g)?;
        t.cross_entropy(p, 0)
    }).unwrap()));

    let elapsed = start.elapsed();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let listing: Vec<String> = errs.iter().map(|(name, e)| format!("{name} {e:.1e}")).collect();
    Outcome::check(worst <= 1e-4 && within(elapsed, 120), format!("{}, {elapsed:.1?}", listing.join(", ")))
}

// ---------------------------------------------------------------- dense oracle

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn mm(a: &[Vec<f64>], b: &Tensor) -> Vec<Vec<f64>> {
    a.iter()
        .map(|r| (0..b.cols()).map(|j| (0..b.rows()).map(|k| r[k] * b.get(k, j)).sum()).collect())
        .collect()
}

fn param(m: &Model, name: &str) -> Tensor {
    m.params.value(m.params.find(name).unwrap()).clone()
}

fn dense_mlp(m: &Model, x: &[f64]) -> [f64; 2] {
    let (w1, b1, w2, b2) = (param(m, "mlp_w1"), param(m, "mlp_b1"), param(m, "mlp_w2"), param(m, "mlp_b2"));
    let h: Vec<f64> = mm(&[x.to_vec()], &w1)[0].iter().zip(b1.data()).map(|(a, b)| (a + b).max(0.0)).collect();
    let z: Vec<f64> = mm(&[h], &w2)[0].iter().zip(b2.data()).map(|(a, b)| a + b).collect();
    let mx = z[0].max(z[1]);
    let e = [(z[0] - mx).exp(), (z[1] - mx).exp()];
    [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
}

fn dense_san(m: &Model, f: &ClaimFeatures) -> [f64; 2] {
    let (wq, wk, wv) = (param(m, "w_q"), param(m, "w_k"), param(m, "w_v"));
    let d = m.config().dim;
    let mut concat = Vec::new();
    for pair in &f.pairs {
        let s = rows(pair.tokens.as_ref().unwrap());
        let q = &mm(&[pair.nli.as_array().to_vec()], &wq)[0];
        let k = mm(&s, &wk);
        let v = mm(&s, &wv);
        let scores: Vec<f64> = k.iter().map(|kr| kr.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()).collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..d {
            concat.push((0..v.len()).map(|r| e[r] / z * v[r][c]).sum());
        }
    }
    concat.resize(m.config().pairs * d, 0.0);
    dense_mlp(m, &concat)
}

fn dense_graph(m: &Model, g: &EvidenceGraph) -> [f64; 2] {
    let (x, adj) = (&g.features, &g.adjacency);
    let n = x.rows();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + adj.row_slice(i).iter().sum::<f64>()).collect();
    let xw = mm(&rows(x), &param(m, "gcn_w"));
    let b = param(m, "gcn_b");
    let mut pooled = vec![0.0; b.cols()];
    for i in 0..n {
        for (c, p) in pooled.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                let a = if i == j { 1.0 } else { adj.get(i, j) };
                acc += a / (deg[i] * deg[j]).sqrt() * xw[j][c];
            }
            *p += (acc + b.get(0, c)).max(0.0) / n as f64;
        }
    }
    dense_mlp(m, &pooled)
}

fn dense_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = rng.gen_range(2..10);
        let n = rng.gen_range(1..6);
        let san = Model::new(HeadConfig::new(HeadKind::NliSan, d).with_pairs(n), i).unwrap();
        let (used, tokens) = (rng.gen_range(0..=n), rng.gen_range(1..15));
        let f = san_features(&mut rng, d, used, tokens);
        let (got, want) = (san.probabilities(&f).unwrap(), dense_san(&san, &f));
        worst = worst.max((got[0] - want[0]).abs()).max((got[1] - want[1]).abs());

        let graph = Model::new(HeadConfig::new(HeadKind::NliGraph, d), i).unwrap();
        let nodes = rng.gen_range(1..9);
        let g = random_graph(&mut rng, d, nodes);
        let want = dense_graph(&graph, &g);
        let got = graph.probabilities(&ClaimFeatures { pairs: vec![], graph: Some(g) }).unwrap();
        worst = worst.max((got[0] - want[0]).abs()).max((got[1] - want[1]).abs());
    }
    Outcome::check(worst <= 1e-10, format!("100 attention + 100 graph instances, max diff {worst:.1e}"))
}

// ---------------------------------------------------------------- dedup

fn claim(id: &str, label: Label) -> ClaimRecord {
    ClaimRecord {
        id: id.into(),
        text: format!("claim {id}"),
        label,
        claim_source: "synthetic".into(),
        origin_dataset: "synthetic".into(),
        types: BTreeSet::new(),
    }
}

fn kept(claims: &[ClaimRecord], pairs: &[SimilarityPair], tau: f64) -> BTreeSet<String> {
    let report = deduplicate(claims, &filter_pairs(pairs, tau), DedupPolicy::ClusterRepresentative).unwrap();
    report.kept.into_iter().collect()
}

fn dedup_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut monotone, mut presets, mut idempotent, mut partition) = (true, true, true, true);
    let (large, small) = (DedupConfig::large().threshold, DedupConfig::small().threshold);
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let claims: Vec<ClaimRecord> = (0..n)
            .map(|i| claim(&format!("c{i:03}"), if rng.gen_bool(0.5) { Label::True } else { Label::False }))
            .collect();
        let mut pairs = Vec::new();
        for _ in 0..rng.gen_range(0..3 * n) {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b {
                let p = if rng.gen_bool(0.5) { rng.gen_range(0.85..1.0) } else { rng.gen_range(0.0..1.0) };
                pairs.push(SimilarityPair::new(&claims[a].id, &claims[b].id, p).unwrap());
            }
        }
        let mut taus: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..1.0)).collect();
        taus.sort_by(f64::total_cmp);
        for w in taus.windows(2) {
            monotone &= kept(&claims, &pairs, w[0]).is_subset(&kept(&claims, &pairs, w[1]));
        }
        presets &= kept(&claims, &pairs, small).is_subset(&kept(&claims, &pairs, large));

        let filtered = filter_pairs(&pairs, small);
        let report = deduplicate(&claims, &filtered, DedupPolicy::ClusterRepresentative).unwrap();
        let survivors: Vec<ClaimRecord> = claims.iter().filter(|c| report.kept.contains(&c.id)).cloned().collect();
        let again = deduplicate(&survivors, &restrict_pairs(&filtered, &report.kept_set()), DedupPolicy::ClusterRepresentative).unwrap();
        idempotent &= again.kept == report.kept && again.removed.is_empty();

        let removed: BTreeSet<&str> = report.removed.iter().map(|r| r.id.as_str()).collect();
        let all: BTreeSet<&str> = claims.iter().map(|c| c.id.as_str()).collect();
        partition &= report.kept_set().is_disjoint(&removed)
            && report.kept_set().union(&removed).copied().collect::<BTreeSet<_>>() == all
            && report.after.total == report.kept.len()
            && report.before.total == n;
    }
    let stats = summarize(&[0.2, 0.4, 0.6]).unwrap();
    let stats_ok = stats.mean == 0.4 && stats.p90 == 0.6 && (stats.std - 0.2).abs() <= f64::EPSILON;
    Outcome::check(
        monotone && presets && idempotent && partition && stats_ok,
        format!(
            "monotone {monotone}, small⊆large {presets}, idempotent {idempotent}, partition {partition}; \
             [0.2,0.4,0.6] → mean {} std {} p90 {}",
            stats.mean, stats.std, stats.p90
        ),
    )
}

// ---------------------------------------------------------------- metrics

fn metrics() -> Outcome {
    use Label::{False as F, True as T};
    let m = classification_metrics(&[T, T, F, F], &[T, F, F, F]).unwrap();
    let hand = ((2.0 / 3.0) + 0.8) / 2.0;
    let macro_ok = (m.macro_f1 - hand).abs() <= 1e-9 && (m.macro_f1 - 0.733).abs() < 5e-4;
    let ap = ap_at_k(&[Some(1), Some(3), Some(101)], 5).unwrap();
    let ap_ok = (ap - 2.0 / 3.0).abs() <= 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut monotone = true;
    for _ in 0..200 {
        let ranks: Vec<Option<usize>> = (0..rng.gen_range(1..30))
            .map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(1..150)) })
            .collect();
        let mut prev = 0.0;
        for k in 1..160 {
            let v = ap_at_k(&ranks, k).unwrap();
            monotone &= v >= prev;
            prev = v;
        }
    }
    Outcome::check(
        macro_ok && ap_ok && monotone,
        format!("macro-F1 {:.6}, AP@5 {ap:.6}, monotone in k {monotone}", m.macro_f1),
    )
}

// ---------------------------------------------------------------- synthetic training

const SUBJECTS: &[&str] = &[
    "garlic", "ginger", "turmeric", "zinc", "honey", "bleach", "vinegar", "coffee", "sunlight", "saltwater",
    "echinacea", "licorice", "oregano", "cinnamon", "lemon", "onion", "pepper", "fasting", "sauna", "yoga",
    "aspirin", "melatonin", "probiotics", "seaweed", "chocolate",
];
const EFFECTS: &[&str] = &[
    "influenza", "measles", "migraines", "asthma", "insomnia", "arthritis", "diabetes", "anemia", "obesity",
    "eczema", "malaria", "tuberculosis", "acne", "gout", "hepatitis", "cholera", "rabies", "scurvy", "bronchitis",
    "sinusitis",
];
const VERBS: &[&str] = &["prevents", "cures", "treats", "stops", "reduces"];

const SUPPORT: &[&str] = &[
    "Clinical trials confirm that {s} {v} {e} in most patients.",
    "Doctors agree that {s} reliably {v} {e}.",
    "A large study showed {s} {v} {e} effectively.",
    "Health agencies recommend {s} because it {v} {e}.",
    "Researchers verified that {s} {v} {e}.",
    "Evidence consistently shows {s} {v} {e}.",
];
const REFUTE: &[&str] = &[
    "Researchers found that {s} does not {v} {e}.",
    "The claim that {s} {v} {e} is false and was debunked.",
    "This myth about {s} and {e} is not supported by any evidence.",
    "Doctors say it is untrue that {s} {v} {e}.",
    "Fact checkers rated the {s} {e} story a hoax.",
    "There is no proof {s} {v} {e}; experts denied it.",
];
const FILLER: &[&str] = &[
    "{s} is widely discussed on social media.",
    "Many people search online for {e} remedies.",
    "{s} has been used in kitchens for centuries.",
];

fn fill(template: &str, s: &str, v: &str, e: &str) -> String {
    let v_base = v.trim_end_matches('s');
    let v = if template.contains("not {v}") || template.contains("to {v}") { v_base } else { v };
    template.replace("{s}", s).replace("{v}", v).replace("{e}", e)
}

struct SyntheticClaim {
    id: String,
    text: String,
    evidence: Vec<String>,
    label: Label,
}

/// Balanced claims whose evidence sentences support or refute them.
fn synthetic_claims(count: usize, seed: u64) -> Vec<SyntheticClaim> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = if i % 2 == 0 { Label::True } else { Label::False };
            let s = SUBJECTS.choose(&mut rng).unwrap();
            let v = VERBS.choose(&mut rng).unwrap();
            let e = EFFECTS.choose(&mut rng).unwrap();
            let pool = if label == Label::True { SUPPORT } else { REFUTE };
            let mut evidence: Vec<String> = pool.choose_multiple(&mut rng, 4).map(|t| fill(t, s, v, e)).collect();
            let filler = fill(FILLER.choose(&mut rng).unwrap(), s, v, e);
            evidence.insert(rng.gen_range(0..=evidence.len()), filler);
            SyntheticClaim {
                id: format!("s{i:04}"),
                text: format!("{s} {v} {e}"),
                evidence,
                label,
            }
        })
        .collect()
}

const EMBED_DIM: usize = 32;
const ENCODER_DIM: usize = 64;

fn fixture_client(nli: FixtureNli) -> EncoderClient {
    let backend = Arc::new(FixtureEncoder::new(EMBED_DIM, ENCODER_DIM).with_nli(nli));
    EncoderClient::new(backend, CacheMode::Live, EncoderCache::in_memory()).unwrap()
}

fn synthetic_examples(kind: HeadKind, claims: &[SyntheticClaim], client: &EncoderClient) -> Vec<Example> {
    let config = FeatureConfig::for_head(kind);
    claims
        .iter()
        .map(|c| {
            let evidence: Vec<&str> = c.evidence.iter().map(String::as_str).collect();
            Example {
                id: c.id.clone(),
                features: claim_features(kind, &config, &c.text, &evidence, client).unwrap(),
                label: c.label,
            }
        })
        .collect()
}

/// Mean held-out macro-F1 over 5 folds with the head's default training settings.
fn heldout_macro_f1(kind: HeadKind, examples: &[Example], seed: u64) -> (f64, usize) {
    let config = TrainConfig::for_head(kind, seed);
    let head = HeadConfig::new(kind, ENCODER_DIM);
    let report = kfold_evaluate(examples, 5, &config, |fold| Model::new(head, seed + fold as u64)).unwrap();
    (report.mean.macro_f1, config.epochs)
}

fn synthetic_head(kind: HeadKind) -> Outcome {
    let start = Instant::now();
    let claims = synthetic_claims(500, 707);
    let examples = synthetic_examples(kind, &claims, &fixture_client(FixtureNli::Cues));
    let (f1, epochs) = heldout_macro_f1(kind, &examples, 7);
    let elapsed = start.elapsed();
    Outcome::check(f1 >= 0.95 && within(elapsed, 600), format!("macro-F1 {f1:.4} after {epochs} epochs, {elapsed:.1?}"))
}

fn uninformative_triplets() -> Outcome {
    let start = Instant::now();
    let claims = synthetic_claims(500, 707);
    let constant = fixture_client(FixtureNli::Constant(NliTriplet::new(0.2, 0.5, 0.3).unwrap()));
    let nli = heldout_macro_f1(HeadKind::Nli, &synthetic_examples(HeadKind::Nli, &claims, &constant), 7).0;
    let sent = heldout_macro_f1(HeadKind::NliSent, &synthetic_examples(HeadKind::NliSent, &claims, &constant), 7).0;
    let elapsed = start.elapsed();
    Outcome::check(
        nli <= 0.6 && sent >= 0.9 && within(elapsed, 600),
        format!("nli {nli:.4}, nli-sent {sent:.4}, {elapsed:.1?}"),
    )
}

// ---------------------------------------------------------------- determinism

fn small_pipeline(client: Arc<EncoderClient>, config: &PipelineConfig) -> Pipeline {
    let docs = vec![
        DocumentRecord {
            id: "vitc".into(),
            url: "https://example.org/vitc".into(),
            domain: "example.org".into(),
            text: "Vitamin C does not cure the common cold. Large trials found no effect of vitamin C on colds.".into(),
        },
        DocumentRecord {
            id: "masks".into(),
            url: "https://example.org/masks".into(),
            domain: "example.org".into(),
            text: "Face masks reduce the spread of respiratory droplets. Cloth masks filter large particles.".into(),
        },
    ];
    let paragraphs = build_paragraphs(&docs, 300, &WhitespaceCounter).unwrap();
    let index = build_corpus_index(&paragraphs, config.retrieval.analyzer).unwrap();
    Pipeline::new(
        index,
        ParagraphStore::new(paragraphs).unwrap(),
        docs,
        Some(Box::new(LexicalScorer::new(config.retrieval.analyzer))),
        client,
        config.clone(),
    )
    .unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let mut config = PipelineConfig::default();
    config.retrieval.first_k = 10;
    config.retrieval.final_k = 2;
    let model = Model::new(config.head.head_config(config.encoder.encoder_dim), config.seed).unwrap();
    let claim = "Vitamin C cures colds";

    config.encoder.mode = CacheMode::Record;
    let recorder = Arc::new(config.encoder.client(Some(&cache)).unwrap());
    let recorded = serde_json::to_string(&small_pipeline(recorder.clone(), &config).verify(&model, claim).unwrap()).unwrap();
    recorder.flush().unwrap();

    config.encoder.mode = CacheMode::Replay;
    let replays: Vec<String> = (0..3)
        .map(|_| {
            let client = Arc::new(config.encoder.client(Some(&cache)).unwrap());
            serde_json::to_string(&small_pipeline(client, &config).verify(&model, claim).unwrap()).unwrap()
        })
        .collect();
    let replay_ok = replays.iter().all(|r| *r == recorded);

    let claims = synthetic_claims(60, 808);
    let client = fixture_client(FixtureNli::Cues);
    let examples = synthetic_examples(HeadKind::NliSan, &claims, &client);
    let runs: Vec<(Vec<u8>, Vec<u64>)> = (0..2)
        .map(|_| {
            let mut m = Model::new(HeadConfig::new(HeadKind::NliSan, ENCODER_DIM), 11).unwrap();
            let config = TrainConfig {
                epochs: 5,
                ..TrainConfig::for_head(HeadKind::NliSan, 11)
            };
            let report = train(&mut m, &examples, &config).unwrap();
            (m.to_bytes(), report.epoch_losses.iter().map(|l| l.to_bits()).collect())
        })
        .collect();
    let train_ok = runs[0] == runs[1];
    Outcome::check(
        replay_ok && train_ok,
        format!(
            "replayed verify identical to recording ×3: {replay_ok}; seeded training checkpoints and losses identical: {train_ok}"
        ),
    )
}

// ---------------------------------------------------------------- runner

fn main() {
    let mut passed = 0;
    let mut total = 0;
    let mut report = |name: &str, outcome: Outcome| {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {name}: {}", outcome.detail);
        total += 1;
        passed += usize::from(outcome.passed);
    };
    report("BM25 matches exhaustive scorer on 50 corpora", bm25_oracle());
    report("RM3 weights, endpoint and shared feedback term", rm3_properties());
    report("finite-difference gradient checks", gradient_checks());
    report("attention and graph heads match dense oracle", dense_oracle());
    report("dedup properties and similarity statistics", dedup_properties());
    report("classification metrics and AP@k", metrics());
    report("synthetic training: nli-san held-out macro-F1 >= 0.95", synthetic_head(HeadKind::NliSan));
    report("synthetic training: nli-graph held-out macro-F1 >= 0.95", synthetic_head(HeadKind::NliGraph));
    report("synthetic training: uninformative triplets, nli <= 0.6 and nli-sent >= 0.9", uninformative_triplets());
    report("replay and seeded training are bit-identical", determinism());
    println!(
        "NOTE  headline benchmark figures are not reproduced: they need the full claim collection, \
         the crawled document set and the original pretrained weights; `evaluate` prints comparable tables \
         when those are supplied"
    );
    println!("{passed} of {total} criteria passed");
    if passed < total {
        std::process::exit(1);
    }
}
