//! Veracity heads that fuse NLI distributions with encoder representations,
//! their ablations, training, cross-validation and metrics.

mod features;
mod graph;
mod heads;
mod metrics;
mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use features::{claim_features, FeatureConfig};
pub use graph::{build_evidence_graph, graph_node_features, EvidenceGraph, GraphEdge};
pub use heads::{neutral_pair, Head, Model};
pub use metrics::{ap_at_k, classification_metrics, ClassMetrics, ClassificationMetrics, FoldMetrics, MetricsReport};
pub use train::{assign_folds, kfold_evaluate, predict, train, Example, TrainConfig, TrainReport};

use crate::encoder::NliTriplet;
use crate::nn::Tensor;

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Attention over each pair's token vectors with the NLI triplet as query.
    NliSan,
    /// Graph convolution over claim and evidence nodes.
    NliGraph,
    /// Concatenated NLI triplets only.
    Nli,
    /// First token vector of each pair plus its triplet.
    NliSent,
    /// Pooled pair vector plus triplet, averaged over pairs.
    NliPsent,
    /// Graph head with triplet-only node features.
    NliGraphAbl,
}

impl HeadKind {
    pub const ALL: [HeadKind; 6] = [
        HeadKind::NliSan,
        HeadKind::NliGraph,
        HeadKind::Nli,
        HeadKind::NliSent,
        HeadKind::NliPsent,
        HeadKind::NliGraphAbl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::NliSan => "nli-san",
            HeadKind::NliGraph => "nli-graph",
            HeadKind::Nli => "nli",
            HeadKind::NliSent => "nli-sent",
            HeadKind::NliPsent => "nli-psent",
            HeadKind::NliGraphAbl => "nli-graph-abl",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, HeadKind::NliGraph | HeadKind::NliGraphAbl)
    }

    /// Evidence pairs consumed per claim by default.
    pub fn default_pairs(self) -> usize {
        match self {
            HeadKind::NliSan | HeadKind::Nli | HeadKind::NliSent => 5,
            HeadKind::NliPsent | HeadKind::NliGraph | HeadKind::NliGraphAbl => 30,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = HeadKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown head {s:?} ({})", names.join("|"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Evidence pairs per claim (`N`).
    pub pairs: usize,
    /// Encoder representation size (`d`).
    pub dim: usize,
    pub hidden: usize,
    pub gcn_channels: usize,
    /// ReLU on the graph convolution output.
    pub gcn_relu: bool,
}

impl HeadConfig {
    pub fn new(kind: HeadKind, dim: usize) -> Self {
        Self {
            kind,
            pairs: kind.default_pairs(),
            dim,
            hidden: 50,
            gcn_channels: 50,
            gcn_relu: true,
        }
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = pairs;
        self
    }
}

/// Encoder outputs for one (claim, evidence) pair. Which parts are present
/// depends on the head the features were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    /// `n_tokens × d` last-layer token vectors.
    pub tokens: Option<Arc<Tensor>>,
    /// `1 × d` pooled pair representation.
    pub pooled: Option<Arc<Tensor>>,
    pub nli: NliTriplet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClaimFeatures {
    /// Pairs in evidence order, most similar first.
    pub pairs: Vec<PairFeatures>,
    pub graph: Option<EvidenceGraph>,
}
