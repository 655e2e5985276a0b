//! End-to-end composition: paragraphs and index from documents, multistage
//! retrieval, evidence selection, head features and verdicts. Also the
//! pipeline configuration shared by every command.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{segment_paragraphs, ClaimRecord, DocumentRecord, Label, Paragraph, ParagraphStore, TokenCounter};
use crate::dedup::{DedupConfig, DedupPolicy, DedupPreset};
use crate::encoder::{CacheMode, EncoderBackend, EncoderCache, EncoderClient, FixtureEncoder, HttpBackend, ModelIds};
use crate::error::{Error, Result};
use crate::evidence::{retrieve_evidence, EvidenceConfig, EvidenceSet, SelectionPolicy};
use crate::index::{AnalyzerConfig, Bm25Params, InvertedIndex, Rm3Params};
use crate::rerank::{aggregate_documents, multistage_retrieve, DocScore, MultistageConfig, RelevanceScorer};
use crate::verdict::{claim_features, ClaimFeatures, Example, FeatureConfig, HeadKind, Model};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub claims: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k1: f64,
    pub b: f64,
    pub first_k: usize,
    /// Documents kept after re-ranking.
    pub final_k: usize,
    pub rm3: Option<Rm3Params>,
    /// `lexical`, `fixture:<path>`, `service:<url>`, or `none` for BM25 order.
    pub scorer: Option<String>,
    pub paragraph_tokens: usize,
    pub analyzer: AnalyzerConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let bm25 = Bm25Params::default();
        Self {
            k1: bm25.k1,
            b: bm25.b,
            first_k: 100,
            final_k: 10,
            rm3: None,
            scorer: Some("lexical".into()),
            paragraph_tokens: 300,
            analyzer: AnalyzerConfig::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }

    /// Paragraph-level stages keep every first-stage candidate so documents
    /// can be cut at `final_k` after aggregation.
    pub fn multistage(&self) -> MultistageConfig {
        MultistageConfig {
            first_k: self.first_k,
            final_k: self.first_k,
            bm25: self.bm25(),
            rm3: self.rm3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25().validate()?;
        if self.final_k == 0 || self.final_k > self.first_k {
            return Err(Error::invalid(format!(
                "need 1 <= final_k <= first_k, got final_k={} first_k={}",
                self.final_k, self.first_k
            )));
        }
        if self.paragraph_tokens == 0 {
            return Err(Error::invalid("paragraph_tokens must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupSettings {
    pub preset: DedupPreset,
    pub threshold: Option<f64>,
    pub candidate_k: usize,
    pub policy: DedupPolicy,
}

impl Default for DedupSettings {
    fn default() -> Self {
        Self {
            preset: DedupPreset::Large,
            threshold: None,
            candidate_k: DedupConfig::large().candidate_k,
            policy: DedupPolicy::ClusterRepresentative,
        }
    }
}

impl DedupSettings {
    pub fn config(&self) -> Result<DedupConfig> {
        let base = match (self.preset, self.threshold) {
            (DedupPreset::Custom, Some(t)) => DedupConfig::custom(t, self.candidate_k)?,
            (DedupPreset::Custom, None) => return Err(Error::invalid("custom dedup preset needs a threshold")),
            (preset, _) => DedupConfig::preset(preset)?,
        };
        let config = DedupConfig {
            candidate_k: self.candidate_k,
            ..base
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSettings {
    pub kind: HeadKind,
    /// Evidence pairs per claim; the head's default when absent.
    pub pairs: Option<usize>,
    pub hidden: usize,
    pub gcn_channels: usize,
    pub gcn_relu: bool,
    pub graph_threshold: f64,
    /// Overrides the head's epoch count.
    pub epochs: Option<usize>,
    /// Overrides the head's base learning rate.
    pub learning_rate: Option<f64>,
    pub folds: usize,
    /// Evidence selection; flat top-5 for pair heads, 3 per document for
    /// heads that read 30 pairs, when absent.
    pub evidence: Option<SelectionPolicy>,
    pub min_tokens: usize,
}

impl Default for HeadSettings {
    fn default() -> Self {
        Self {
            kind: HeadKind::NliSan,
            pairs: None,
            hidden: 50,
            gcn_channels: 50,
            gcn_relu: true,
            graph_threshold: 0.9,
            epochs: None,
            learning_rate: None,
            folds: 5,
            evidence: None,
            min_tokens: EvidenceConfig::default().min_tokens,
        }
    }
}

impl HeadSettings {
    pub fn pairs(&self) -> usize {
        self.pairs.unwrap_or_else(|| self.kind.default_pairs())
    }

    pub fn selection(&self) -> SelectionPolicy {
        self.evidence.unwrap_or(match self.kind {
            HeadKind::NliSan | HeadKind::Nli | HeadKind::NliSent => SelectionPolicy::FlatTopN { n: self.pairs() },
            _ => SelectionPolicy::PerDocTopM { per_doc: 3 },
        })
    }

    pub fn head_config(&self, dim: usize) -> crate::verdict::HeadConfig {
        crate::verdict::HeadConfig {
            kind: self.kind,
            pairs: self.pairs(),
            dim,
            hidden: self.hidden,
            gcn_channels: self.gcn_channels,
            gcn_relu: self.gcn_relu,
        }
    }

    pub fn train_config(&self, seed: u64) -> crate::verdict::TrainConfig {
        let mut cfg = crate::verdict::TrainConfig::for_head(self.kind, seed);
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.schedule.base = lr;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    /// `fixture` for the built-in deterministic encoder, or a service URL.
    pub backend: String,
    pub mode: CacheMode,
    /// Fixture encoder sizes.
    pub embed_dim: usize,
    pub encoder_dim: usize,
    /// Model identities for replay; taken from the backend otherwise.
    pub models: Option<ModelIds>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            backend: "fixture".into(),
            mode: CacheMode::Live,
            embed_dim: 32,
            encoder_dim: 16,
            models: None,
        }
    }
}

impl EncoderSettings {
    fn fixture(&self) -> FixtureEncoder {
        FixtureEncoder::new(self.embed_dim, self.encoder_dim)
    }

    /// Backend used for live/record calls and for tokenization/tagging.
    pub fn backend(&self) -> Result<Arc<dyn EncoderBackend>> {
        if self.backend == "fixture" {
            Ok(Arc::new(self.fixture()))
        } else if self.backend.starts_with("http://") || self.backend.starts_with("https://") {
            Ok(Arc::new(HttpBackend::new(&self.backend)))
        } else {
            Err(Error::invalid(format!("encoder backend {:?} is neither `fixture` nor a URL", self.backend)))
        }
    }

    /// A client in the configured mode, reading and writing `cache` when given.
    pub fn client(&self, cache: Option<&Path>) -> Result<EncoderClient> {
        let store = match cache {
            Some(p) => EncoderCache::open(p)?,
            None => EncoderCache::in_memory(),
        };
        match self.mode {
            CacheMode::Replay => {
                if cache.is_none() {
                    return Err(Error::invalid("replay mode needs a cache file"));
                }
                let models = match (&self.models, self.backend.as_str()) {
                    (Some(m), _) => m.clone(),
                    (None, "fixture") => self.fixture().models.ids(),
                    (None, _) => ModelIds::default(),
                };
                Ok(EncoderClient::replay(models, store))
            }
            mode => {
                let backend = self.backend()?;
                match &self.models {
                    Some(m) => EncoderClient::with_models(backend, mode, store, m),
                    None => EncoderClient::new(backend, mode, store),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub retrieval: RetrievalConfig,
    pub dedup: DedupSettings,
    pub head: HeadSettings,
    pub encoder: EncoderSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: PathsConfig::default(),
            retrieval: RetrievalConfig::default(),
            dedup: DedupSettings::default(),
            head: HeadSettings::default(),
            encoder: EncoderSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Hex prefix of the SHA-256 of the canonical JSON form, leaving out file
    /// locations and the cache mode, which do not change results.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("paths");
            if let Some(enc) = obj.get_mut("encoder").and_then(|e| e.as_object_mut()) {
                enc.remove("mode");
            }
        }
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn evidence_config(&self) -> EvidenceConfig {
        EvidenceConfig {
            policy: self.head.selection(),
            min_tokens: self.head.min_tokens,
            analyzer: self.retrieval.analyzer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.dedup.config()?;
        self.head.selection().validate()?;
        if self.head.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        Ok(())
    }
}

/// Provenance attached to every emitted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config_hash: String,
    pub seed: u64,
}

impl RunInfo {
    pub fn of(config: &PipelineConfig) -> Self {
        Self {
            config_hash: config.hash(),
            seed: config.seed,
        }
    }
}

/// Segments every document into paragraphs of at most `max_tokens`.
pub fn build_paragraphs(docs: &[DocumentRecord], max_tokens: usize, counter: &dyn TokenCounter) -> Result<Vec<Paragraph>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(segment_paragraphs(d, max_tokens, counter)?);
    }
    Ok(out)
}

pub fn build_corpus_index(paragraphs: &[Paragraph], analyzer: AnalyzerConfig) -> Result<InvertedIndex> {
    InvertedIndex::build(paragraphs.iter().map(|p| (p.paragraph_id(), p.text.as_str())), analyzer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEvidence {
    pub text: String,
    pub similarity: f64,
    pub source_doc_id: String,
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    #[serde(rename = "True")]
    pub true_: f64,
    #[serde(rename = "False")]
    pub false_: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub claim: String,
    pub verdict: Label,
    pub probabilities: ClassProbabilities,
    pub head: HeadKind,
    pub evidence: Vec<VerdictEvidence>,
    pub documents: Vec<DocScore>,
    #[serde(flatten)]
    pub run: RunInfo,
}

/// Retrieval and evidence stages over one document collection.
pub struct Pipeline {
    pub index: InvertedIndex,
    pub paragraphs: ParagraphStore,
    documents: HashMap<String, DocumentRecord>,
    doc_order: Vec<String>,
    pub scorer: Option<Box<dyn RelevanceScorer>>,
    pub client: Arc<EncoderClient>,
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(
        index: InvertedIndex,
        paragraphs: ParagraphStore,
        documents: Vec<DocumentRecord>,
        scorer: Option<Box<dyn RelevanceScorer>>,
        client: Arc<EncoderClient>,
        config: PipelineConfig,
    ) -> Result<Pipeline> {
        config.validate()?;
        let doc_order = documents.iter().map(|d| d.id.clone()).collect();
        let mut by_id = HashMap::with_capacity(documents.len());
        for d in documents {
            let id = d.id.clone();
            if by_id.insert(id.clone(), d).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Pipeline {
            index,
            paragraphs,
            documents: by_id,
            doc_order,
            scorer,
            client,
            config,
        })
    }

    pub fn document(&self, id: &str) -> Option<&DocumentRecord> {
        self.documents.get(id)
    }

    /// Document ids in load order.
    pub fn document_ids(&self) -> &[String] {
        &self.doc_order
    }

    /// Top `final_k` documents for a claim, each scored by its best paragraph.
    pub fn retrieve_documents(&self, claim: &str) -> Result<Vec<DocScore>> {
        let ranked = multistage_retrieve(
            &self.index,
            self.scorer.as_deref(),
            &self.paragraphs,
            claim,
            &self.config.retrieval.multistage(),
        )?;
        let mut docs = aggregate_documents(&ranked);
        docs.truncate(self.config.retrieval.final_k);
        Ok(docs)
    }

    /// Retrieved documents and the evidence sentences selected from them.
    pub fn evidence(&self, claim_id: &str, claim: &str) -> Result<(Vec<DocScore>, EvidenceSet)> {
        let docs = self.retrieve_documents(claim)?;
        let records: Vec<DocumentRecord> = docs
            .iter()
            .map(|d| {
                self.documents
                    .get(&d.doc_id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownId(d.doc_id.clone()))
            })
            .collect::<Result<_>>()?;
        let set = retrieve_evidence(claim_id, claim, &records, &self.config.evidence_config(), &self.client)?;
        Ok((docs, set))
    }

    pub fn features(&self, kind: HeadKind, pairs: usize, claim: &str, evidence: &EvidenceSet) -> Result<ClaimFeatures> {
        let texts: Vec<&str> = evidence.sentences.iter().map(|s| s.text.as_str()).collect();
        let cfg = FeatureConfig {
            pairs,
            graph_threshold: self.config.head.graph_threshold,
        };
        claim_features(kind, &cfg, claim, &texts, &self.client)
    }

    /// Labelled training examples, in claim order.
    pub fn examples(&self, claims: &[ClaimRecord]) -> Result<Vec<Example>> {
        let kind = self.config.head.kind;
        let pairs = self.config.head.pairs();
        claims
            .iter()
            .map(|c| {
                let (_, ev) = self.evidence(&c.id, &c.text)?;
                Ok(Example {
                    id: c.id.clone(),
                    features: self.features(kind, pairs, &c.text, &ev)?,
                    label: c.label,
                })
            })
            .collect()
    }

    /// Full claim verification with a trained head.
    pub fn verify(&self, model: &Model, claim: &str) -> Result<VerdictRecord> {
        let claim = claim.trim();
        if claim.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let (documents, evidence) = self.evidence("query", claim)?;
        let cfg = model.config();
        let features = self.features(cfg.kind, cfg.pairs, claim, &evidence)?;
        let p = model.probabilities(&features)?;
        let verdict = if p[1] > p[0] { Label::True } else { Label::False };
        let evidence = evidence
            .sentences
            .iter()
            .map(|s| VerdictEvidence {
                text: s.text.clone(),
                similarity: s.similarity,
                source_doc_id: s.source_doc_id.clone(),
                source_url: self.documents.get(&s.source_doc_id).map(|d| d.url.clone()).unwrap_or_default(),
            })
            .collect();
        Ok(VerdictRecord {
            claim: claim.to_string(),
            verdict,
            probabilities: ClassProbabilities { true_: p[1], false_: p[0] },
            head: cfg.kind,
            evidence,
            documents,
            run: RunInfo::of(&self.config),
        })
    }
}
