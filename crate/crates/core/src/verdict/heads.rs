use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClaimFeatures, HeadConfig, HeadKind, PairFeatures, NUM_CLASSES};
use crate::encoder::NliTriplet;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::nn::{
    decode_checkpoint, encode_checkpoint, gcn_layer, linear, scaled_dot_attention, ParamId, ParamStore, Tape, Tensor,
    Var,
};

#[derive(Debug, Clone, Copy)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
enum Body {
    San { wq: ParamId, wk: ParamId, wv: ParamId },
    Graph { w: ParamId, b: ParamId },
    Flat,
}

/// Parameter layout of one head, resolved against a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct Head {
    pub config: HeadConfig,
    body: Body,
    mlp: Mlp,
}

const NEUTRAL: [f64; 3] = [0.0, 1.0, 0.0];

fn param_shapes(config: &HeadConfig) -> Vec<(&'static str, usize, usize)> {
    let d = config.dim;
    let n = config.pairs;
    let mut shapes = Vec::new();
    let mlp_in = match config.kind {
        HeadKind::NliSan => {
            shapes.extend([("w_q", 3, d), ("w_k", d, d), ("w_v", d, d)]);
            n * d
        }
        HeadKind::NliGraph | HeadKind::NliGraphAbl => {
            let f = if config.kind == HeadKind::NliGraph { d + 3 } else { 3 };
            shapes.extend([("gcn_w", f, config.gcn_channels), ("gcn_b", 1, config.gcn_channels)]);
            config.gcn_channels
        }
        HeadKind::Nli => 3 * n,
        HeadKind::NliSent => n * (d + 3),
        HeadKind::NliPsent => d + 3,
    };
    shapes.extend([
        ("mlp_w1", mlp_in, config.hidden),
        ("mlp_b1", 1, config.hidden),
        ("mlp_w2", config.hidden, NUM_CLASSES),
        ("mlp_b2", 1, NUM_CLASSES),
    ]);
    shapes
}

impl Head {
    fn validate(config: &HeadConfig) -> Result<()> {
        if config.pairs == 0 || config.dim == 0 || config.hidden == 0 || config.gcn_channels == 0 {
            return Err(Error::invalid(format!("head sizes must be positive: {config:?}")));
        }
        Ok(())
    }

    /// Adds freshly initialized parameters to `store`: Glorot-uniform weights, zero biases.
    pub fn init(config: HeadConfig, store: &mut ParamStore, seed: u64) -> Result<Head> {
        Self::validate(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, rows, cols) in param_shapes(&config) {
            if name.contains("_b") {
                store.add_zeros(name, rows, cols);
            } else {
                store.add_glorot(name, rows, cols, &mut rng);
            }
        }
        Self::resolve(config, store)
    }

    /// Binds to parameters already in `store`, checking names and shapes.
    pub fn resolve(config: HeadConfig, store: &ParamStore) -> Result<Head> {
        Self::validate(&config)?;
        let mut ids = std::collections::HashMap::new();
        for (name, rows, cols) in param_shapes(&config) {
            let id = store
                .find(name)
                .ok_or_else(|| Error::Format(format!("parameter {name} missing for {} head", config.kind)))?;
            let shape = store.value(id).shape();
            if shape != [rows, cols] {
                return Err(Error::shape(format!("parameter {name} is {shape:?}, expected [{rows}, {cols}]")));
            }
            ids.insert(name, id);
        }
        let mlp = Mlp {
            w1: ids["mlp_w1"],
            b1: ids["mlp_b1"],
            w2: ids["mlp_w2"],
            b2: ids["mlp_b2"],
        };
        let body = match config.kind {
            HeadKind::NliSan => Body::San {
                wq: ids["w_q"],
                wk: ids["w_k"],
                wv: ids["w_v"],
            },
            HeadKind::NliGraph | HeadKind::NliGraphAbl => Body::Graph {
                w: ids["gcn_w"],
                b: ids["gcn_b"],
            },
            _ => Body::Flat,
        };
        Ok(Head { config, body, mlp })
    }

    fn classifier(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (w1, b1) = (tape.param(store, self.mlp.w1), tape.param(store, self.mlp.b1));
        let h = linear(tape, x, w1, b1)?;
        let h = tape.relu(h);
        let (w2, b2) = (tape.param(store, self.mlp.w2), tape.param(store, self.mlp.b2));
        let logits = linear(tape, h, w2, b2)?;
        Ok(tape.softmax(logits))
    }

    fn check_pairs(&self, features: &ClaimFeatures) -> Result<()> {
        if features.pairs.len() > self.config.pairs {
            return Err(Error::shape(format!(
                "{} evidence pairs for a head built for {}",
                features.pairs.len(),
                self.config.pairs
            )));
        }
        Ok(())
    }

    fn tokens<'a>(&self, pair: &'a PairFeatures) -> Result<&'a Arc<Tensor>> {
        let t = pair
            .tokens
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} head needs pair token vectors", self.config.kind)))?;
        if t.cols() != self.config.dim {
            return Err(Error::shape(format!("token vectors of dim {}, head expects {}", t.cols(), self.config.dim)));
        }
        Ok(t)
    }

    fn pooled<'a>(&self, pair: &'a PairFeatures) -> Result<&'a Arc<Tensor>> {
        let t = pair
            .pooled
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} head needs pooled pair vectors", self.config.kind)))?;
        if t.shape() != [1, self.config.dim] {
            return Err(Error::shape(format!("pooled vector {:?}, head expects [1, {}]", t.shape(), self.config.dim)));
        }
        Ok(t)
    }

    /// Class distribution `1×2` (index 0 = False, 1 = True) for one claim.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, features: &ClaimFeatures) -> Result<Var> {
        let c = &self.config;
        let x = match (c.kind, self.body) {
            (HeadKind::NliSan, Body::San { wq, wk, wv }) => {
                self.check_pairs(features)?;
                let (wq, wk, wv) = (tape.param(store, wq), tape.param(store, wk), tape.param(store, wv));
                let mut slots = Vec::with_capacity(c.pairs);
                for pair in &features.pairs {
                    let s = tape.leaf_shared(self.tokens(pair)?.clone());
                    let i = tape.leaf(Tensor::row(&pair.nli.as_array())?);
                    let q = tape.matmul(i, wq)?;
                    let k = tape.matmul(s, wk)?;
                    let v = tape.matmul(s, wv)?;
                    slots.push(scaled_dot_attention(tape, q, k, v, None)?);
                }
                // Padded pairs have every key masked out and contribute nothing.
                for _ in features.pairs.len()..c.pairs {
                    slots.push(tape.leaf(Tensor::zeros(1, c.dim)));
                }
                tape.concat_cols(&slots)?
            }
            (HeadKind::Nli, _) => {
                self.check_pairs(features)?;
                let mut row: Vec<f64> = features.pairs.iter().flat_map(|p| p.nli.as_array()).collect();
                while row.len() < 3 * c.pairs {
                    row.extend(NEUTRAL);
                }
                tape.leaf(Tensor::row(&row)?)
            }
            (HeadKind::NliSent, _) => {
                self.check_pairs(features)?;
                let mut row = Vec::with_capacity(c.pairs * (c.dim + 3));
                for pair in &features.pairs {
                    row.extend_from_slice(self.tokens(pair)?.row_slice(0));
                    row.extend(pair.nli.as_array());
                }
                while row.len() < c.pairs * (c.dim + 3) {
                    row.extend(std::iter::repeat_n(0.0, c.dim));
                    row.extend(NEUTRAL);
                }
                tape.leaf(Tensor::row(&row)?)
            }
            (HeadKind::NliPsent, _) => {
                self.check_pairs(features)?;
                let mut mean = vec![0.0; c.dim + 3];
                if features.pairs.is_empty() {
                    mean[c.dim..].copy_from_slice(&NEUTRAL);
                } else {
                    for pair in &features.pairs {
                        let row = self.pooled(pair)?.row_slice(0).iter().copied().chain(pair.nli.as_array());
                        for (m, v) in mean.iter_mut().zip(row) {
                            *m += v;
                        }
                    }
                    let n = features.pairs.len() as f64;
                    mean.iter_mut().for_each(|m| *m /= n);
                }
                tape.leaf(Tensor::row(&mean)?)
            }
            (HeadKind::NliGraph | HeadKind::NliGraphAbl, Body::Graph { w, b }) => {
                let graph = features
                    .graph
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("{} head needs an evidence graph", c.kind)))?;
                let f = graph.features.cols();
                let x = if c.kind == HeadKind::NliGraph {
                    if f != c.dim + 3 {
                        return Err(Error::shape(format!("node features of {f} columns, head expects {}", c.dim + 3)));
                    }
                    graph.features.clone()
                } else if f == 3 {
                    graph.features.clone()
                } else if f == c.dim + 3 {
                    graph.features.columns(c.dim, f)?
                } else {
                    return Err(Error::shape(format!("node features of {f} columns, head expects 3 or {}", c.dim + 3)));
                };
                let x = tape.leaf(x);
                let (w, b) = (tape.param(store, w), tape.param(store, b));
                let h = gcn_layer(tape, x, &graph.adjacency, w)?;
                let h = tape.add_row(h, b)?;
                let h = if c.gcn_relu { tape.relu(h) } else { h };
                tape.mean_rows(h)
            }
            _ => unreachable!("head body matches its kind by construction"),
        };
        self.classifier(tape, store, x)
    }
}

/// A head together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub head: Head,
    pub params: ParamStore,
    /// Free-form record stored alongside the parameters in checkpoints.
    pub provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    head: HeadConfig,
    #[serde(default)]
    provenance: Option<serde_json::Value>,
}

impl Model {
    pub fn new(config: HeadConfig, seed: u64) -> Result<Model> {
        let mut params = ParamStore::new();
        let head = Head::init(config, &mut params, seed)?;
        Ok(Model {
            head,
            params,
            provenance: None,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.head.config
    }

    /// Class probabilities `[P(False), P(True)]`.
    pub fn probabilities(&self, features: &ClaimFeatures) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let p = self.head.forward(&mut tape, &self.params, features)?;
        let v = tape.value(p);
        Ok([v.get(0, 0), v.get(0, 1)])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            head: self.head.config,
            provenance: self.provenance.clone(),
        };
        encode_checkpoint(&self.params, &serde_json::to_string(&meta).expect("checkpoint metadata serializes"))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let (params, meta) = decode_checkpoint(bytes)?;
        let meta: CheckpointMeta = serde_json::from_str(&meta)?;
        let head = Head::resolve(meta.head, &params)?;
        Ok(Model {
            head,
            params,
            provenance: meta.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// A pair with no evidence: zero token vectors and a neutral triplet.
pub fn neutral_pair(dim: usize, tokens: usize) -> PairFeatures {
    PairFeatures {
        tokens: Some(Arc::new(Tensor::zeros(tokens.max(1), dim))),
        pooled: Some(Arc::new(Tensor::zeros(1, dim))),
        nli: NliTriplet::new(NEUTRAL[0], NEUTRAL[1], NEUTRAL[2]).expect("neutral triplet is a distribution"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check_params;
    use crate::verdict::build_evidence_graph;
    use rand::Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn triplet(rng: &mut ChaCha8Rng) -> NliTriplet {
        let x: [f64; 3] = [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
        let s: f64 = x.iter().sum();
        NliTriplet::new(x[0] / s, x[1] / s, x[2] / s).unwrap()
    }

    fn small(kind: HeadKind, d: usize, n: usize) -> HeadConfig {
        HeadConfig {
            hidden: 5,
            gcn_channels: 4,
            ..HeadConfig::new(kind, d).with_pairs(n)
        }
    }

    fn san_features(rng: &mut ChaCha8Rng, d: usize, n: usize, tokens: usize) -> ClaimFeatures {
        ClaimFeatures {
            pairs: (0..n)
                .map(|_| PairFeatures {
                    tokens: Some(Arc::new(random(rng, tokens, d))),
                    pooled: Some(Arc::new(random(rng, 1, d))),
                    nli: triplet(rng),
                })
                .collect(),
            graph: None,
        }
    }

    // Straight-line reference computations.
    fn mm(a: &[Vec<f64>], b: &Tensor) -> Vec<Vec<f64>> {
        a.iter()
            .map(|r| (0..b.cols()).map(|j| (0..b.rows()).map(|k| r[k] * b.get(k, j)).sum()).collect())
            .collect()
    }

    fn rows(t: &Tensor) -> Vec<Vec<f64>> {
        (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
    }

    fn oracle_mlp(m: &Model, x: &[f64]) -> [f64; 2] {
        let p = |n: &str| m.params.value(m.params.find(n).unwrap()).clone();
        let (w1, b1, w2, b2) = (p("mlp_w1"), p("mlp_b1"), p("mlp_w2"), p("mlp_b2"));
        let h: Vec<f64> = mm(&[x.to_vec()], &w1)[0].iter().zip(b1.data()).map(|(a, b)| (a + b).max(0.0)).collect();
        let z: Vec<f64> = mm(&[h], &w2)[0].iter().zip(b2.data()).map(|(a, b)| a + b).collect();
        let mx = z[0].max(z[1]);
        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
        [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
    }

    fn oracle_san(m: &Model, f: &ClaimFeatures) -> [f64; 2] {
        let p = |n: &str| m.params.value(m.params.find(n).unwrap()).clone();
        let (wq, wk, wv) = (p("w_q"), p("w_k"), p("w_v"));
        let d = m.config().dim;
        let mut o = Vec::new();
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
                o.push((0..v.len()).map(|r| e[r] / z * v[r][c]).sum());
            }
        }
        o.resize(m.config().pairs * d, 0.0);
        oracle_mlp(m, &o)
    }

    fn oracle_graph(m: &Model, x: &Tensor, adj: &Tensor) -> [f64; 2] {
        let p = |n: &str| m.params.value(m.params.find(n).unwrap()).clone();
        let n = x.rows();
        let deg: Vec<f64> = (0..n).map(|i| 1.0 + adj.row_slice(i).iter().sum::<f64>()).collect();
        let xw = mm(&rows(x), &p("gcn_w"));
        let b = p("gcn_b");
        let ch = b.cols();
        let mut mean = vec![0.0; ch];
        for i in 0..n {
            for c in 0..ch {
                let mut acc = 0.0;
                for j in 0..n {
                    let a = if i == j { 1.0 } else { adj.get(i, j) };
                    acc += a / (deg[i] * deg[j]).sqrt() * xw[j][c];
                }
                let h = acc + b.get(0, c);
                mean[c] += if m.config().gcn_relu { h.max(0.0) } else { h } / n as f64;
            }
        }
        oracle_mlp(m, &mean)
    }

    fn random_graph(rng: &mut ChaCha8Rng, d: usize, nodes: usize, f: usize) -> crate::verdict::EvidenceGraph {
        let embs: Vec<Vec<f32>> = (0..nodes).map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
        let feats: Vec<Vec<f64>> = (0..nodes).map(|_| (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        build_evidence_graph(&embs[0], &embs[1..], &feats[0], &feats[1..], 0.1).unwrap()
    }

    #[test]
    fn san_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Model::new(small(HeadKind::NliSan, 4, 2), 3).unwrap();
        for n in [2, 1, 0] {
            let f = san_features(&mut rng, 4, n, 3);
            let got = m.probabilities(&f).unwrap();
            let want = oracle_san(&m, &f);
            assert!((got[0] - want[0]).abs() <= 1e-10 && (got[1] - want[1]).abs() <= 1e-10);
            assert!((got[0] + got[1] - 1.0).abs() <= 1e-12);
        }
        let too_many = san_features(&mut rng, 4, 3, 3);
        assert!(m.probabilities(&too_many).is_err());
    }

    #[test]
    fn san_is_invariant_to_token_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = Model::new(small(HeadKind::NliSan, 4, 2), 5).unwrap();
        let f = san_features(&mut rng, 4, 2, 5);
        let t = f.pairs[1].tokens.as_ref().unwrap();
        let rev: Vec<Vec<f64>> = rows(t).into_iter().rev().collect();
        let mut g = f.clone();
        g.pairs[1].tokens = Some(Arc::new(Tensor::from_rows(&rev).unwrap()));
        let (a, b) = (m.probabilities(&f).unwrap(), m.probabilities(&g).unwrap());
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn graph_heads_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = Model::new(small(HeadKind::NliGraph, 4, 5), 1).unwrap();
        let abl = Model::new(small(HeadKind::NliGraphAbl, 4, 5), 1).unwrap();
        for _ in 0..5 {
            let g = random_graph(&mut rng, 4, 6, 7);
            let want = oracle_graph(&m, &g.features, &g.adjacency);
            let want_abl = oracle_graph(&abl, &g.features.columns(4, 7).unwrap(), &g.adjacency);
            let f = ClaimFeatures { pairs: vec![], graph: Some(g) };
            assert!((m.probabilities(&f).unwrap()[1] - want[1]).abs() <= 1e-10);
            assert!((abl.probabilities(&f).unwrap()[1] - want_abl[1]).abs() <= 1e-10);
        }
        let edgeless = random_graph(&mut rng, 4, 4, 7);
        let bare = crate::verdict::EvidenceGraph {
            adjacency: Tensor::zeros(4, 4),
            edges: vec![],
            ..edgeless
        };
        let want = oracle_graph(&m, &bare.features, &bare.adjacency);
        let f = ClaimFeatures { pairs: vec![], graph: Some(bare) };
        assert!((m.probabilities(&f).unwrap()[0] - want[0]).abs() <= 1e-10);
    }

    #[test]
    fn graph_is_invariant_to_evidence_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = Model::new(small(HeadKind::NliGraph, 4, 5), 2).unwrap();
        let g = random_graph(&mut rng, 4, 6, 7);
        let p = g.permuted(&[0, 3, 5, 1, 4, 2]).unwrap();
        let a = m.probabilities(&ClaimFeatures { pairs: vec![], graph: Some(g) }).unwrap();
        let b = m.probabilities(&ClaimFeatures { pairs: vec![], graph: Some(p) }).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn flat_ablations_match_oracle_and_pad() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let f = san_features(&mut rng, 4, 2, 3);
        let nli = Model::new(small(HeadKind::Nli, 4, 3), 1).unwrap();
        let mut x: Vec<f64> = f.pairs.iter().flat_map(|p| p.nli.as_array()).collect();
        x.extend(NEUTRAL);
        assert!((nli.probabilities(&f).unwrap()[0] - oracle_mlp(&nli, &x)[0]).abs() <= 1e-10);

        let sent = Model::new(small(HeadKind::NliSent, 4, 3), 1).unwrap();
        let mut x = Vec::new();
        for p in &f.pairs {
            x.extend_from_slice(p.tokens.as_ref().unwrap().row_slice(0));
            x.extend(p.nli.as_array());
        }
        x.extend([0.0; 4]);
        x.extend(NEUTRAL);
        assert!((sent.probabilities(&f).unwrap()[0] - oracle_mlp(&sent, &x)[0]).abs() <= 1e-10);

        let psent = Model::new(small(HeadKind::NliPsent, 4, 3), 1).unwrap();
        let x: Vec<f64> = (0..7)
            .map(|c| {
                f.pairs
                    .iter()
                    .map(|p| {
                        let row: Vec<f64> = p.pooled.as_ref().unwrap().row_slice(0).iter().copied().chain(p.nli.as_array()).collect();
                        row[c]
                    })
                    .sum::<f64>()
                    / 2.0
            })
            .collect();
        assert!((psent.probabilities(&f).unwrap()[0] - oracle_mlp(&psent, &x)[0]).abs() <= 1e-10);
    }

    #[test]
    fn missing_inputs_are_rejected() {
        let bare = ClaimFeatures {
            pairs: vec![PairFeatures {
                tokens: None,
                pooled: None,
                nli: NliTriplet::new(0.0, 0.0, 1.0).unwrap(),
            }],
            graph: None,
        };
        for kind in [HeadKind::NliSan, HeadKind::NliSent, HeadKind::NliPsent, HeadKind::NliGraph, HeadKind::NliGraphAbl] {
            let m = Model::new(small(kind, 4, 2), 0).unwrap();
            assert!(m.probabilities(&bare).is_err(), "{kind}");
        }
        let m = Model::new(small(HeadKind::Nli, 4, 2), 0).unwrap();
        assert!(m.probabilities(&bare).is_ok());
    }

    #[test]
    fn composed_heads_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let san = Model::new(small(HeadKind::NliSan, 4, 2), 7).unwrap();
        let f = san_features(&mut rng, 4, 2, 3);
        let err = grad_check_params(&san.params, 1e-6, |t, s| {
            let p = san.head.forward(t, s, &f)?;
            t.cross_entropy(p, 1)
        })
        .unwrap();
        assert!(err <= 1e-4, "san {err}");

        let graph = Model::new(small(HeadKind::NliGraph, 3, 4), 7).unwrap();
        let g = ClaimFeatures {
            pairs: vec![],
            graph: Some(random_graph(&mut rng, 3, 4, 6)),
        };
        let err = grad_check_params(&graph.params, 1e-6, |t, s| {
            let p = graph.head.forward(t, s, &g)?;
            t.cross_entropy(p, 0)
        })
        .unwrap();
        assert!(err <= 1e-4, "graph {err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Model::new(small(HeadKind::NliGraph, 4, 3), 9).unwrap();
        let back = Model::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.params.value(back.params.find("gcn_w").unwrap()), m.params.value(m.params.find("gcn_w").unwrap()));
        let mut wrong = m.to_bytes();
        let other = Model::new(small(HeadKind::NliSan, 4, 3), 9).unwrap();
        let meta = serde_json::json!({ "head": other.config() }).to_string();
        wrong = encode_checkpoint(&decode_checkpoint(&wrong).unwrap().0, &meta);
        assert!(Model::from_bytes(&wrong).is_err());
    }

    #[test]
    fn neutral_pair_contributes_nothing_to_san() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = Model::new(small(HeadKind::NliSan, 4, 3), 4).unwrap();
        let f = san_features(&mut rng, 4, 2, 3);
        let mut padded = f.clone();
        padded.pairs.push(neutral_pair(4, 3));
        let (a, b) = (m.probabilities(&f).unwrap(), m.probabilities(&padded).unwrap());
        assert!((a[0] - b[0]).abs() < 1e-15);
    }
}
