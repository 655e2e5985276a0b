//! `veracity` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use veracity::corpus::{
    categorize_claim, load_claims, load_documents, save_claims, save_documents, ClaimFormat, ClaimRecord,
    DocumentRecord, ParagraphStore, TokenCounter, WhitespaceCounter,
};
use veracity::dedup::{build_claim_index, deduplicate, find_similar_pairs, DedupPolicy, DedupPreset};
use veracity::encoder::{CacheMode, EncoderClient, HttpBackend};
use veracity::fsutil::{atomic_write, LockFile};
use veracity::index::{read_index, write_index};
use veracity::pipeline::{build_corpus_index, build_paragraphs, Pipeline, PipelineConfig, RunInfo};
use veracity::rerank::{multistage_retrieve, resolve_scorer, MultistageConfig, RelevanceScorer};
use veracity::verdict::{kfold_evaluate, train, Example, HeadKind, Model};

const PARAGRAPHS: &str = "paragraphs.jsonl";
const DOCUMENTS: &str = "documents.jsonl";
const CLAIMS: &str = "claims.jsonl";
const INDEX: &str = "index.bin";
const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "veracity", version, about = "Evidence retrieval and claim veracity classification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Global {
    /// TOML configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for initialization, shuffling and fold assignment
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Claims file (.jsonl or .csv)
    #[arg(long, global = true)]
    claims: Option<PathBuf>,
    /// Documents file (.jsonl or .csv)
    #[arg(long, global = true)]
    docs: Option<PathBuf>,
    /// Directory holding ingested paragraphs and the index
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    /// Encoder response cache (JSON lines)
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// live | record | replay
    #[arg(long, global = true)]
    mode: Option<CacheMode>,
    /// large | small
    #[arg(long, global = true)]
    preset: Option<DedupPreset>,
    /// nli-san | nli-graph | nli | nli-sent | nli-psent | nli-graph-abl
    #[arg(long, global = true)]
    head: Option<HeadKind>,
    /// BM25 term-frequency saturation
    #[arg(long, global = true)]
    k1: Option<f64>,
    /// BM25 length normalization
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Paragraphs passed from BM25 to the re-ranker
    #[arg(long, global = true)]
    first_k: Option<usize>,
    /// Documents kept after re-ranking
    #[arg(long, global = true)]
    final_k: Option<usize>,
    /// `fixture` or the encoder service URL
    #[arg(long, global = true)]
    encoder: Option<String>,
    /// lexical | fixture:<path> | service:<url> | none
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Head checkpoint
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Write records here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Human-readable tables instead of line records
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split documents into paragraphs and normalize claims into the index directory
    Ingest {
        /// Count subword tokens with the encoder service instead of words
        #[arg(long)]
        subword_counts: bool,
        /// Tag claim entities with the encoder service
        #[arg(long)]
        service_ner: bool,
    },
    /// Build the BM25 index over ingested paragraphs
    Index,
    /// Retrieve paragraphs for a query
    Search {
        #[arg(long)]
        query: String,
    },
    /// Remove near-duplicate claims
    Dedup {
        /// cluster | greedy
        #[arg(long)]
        policy: Option<DedupPolicy>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Select evidence sentences for claims
    Evidence {
        /// A single claim text instead of --claims
        #[arg(long)]
        claim: Option<String>,
    },
    /// Train a veracity head and save it to --model
    Train,
    /// k-fold cross-validation of a head
    Evaluate {
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Retrieve evidence for a claim and classify it
    Verify {
        #[arg(long)]
        claim: String,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(veracity::Error),
}

impl From<veracity::Error> for Failure {
    fn from(e: veracity::Error) -> Self {
        match e {
            veracity::Error::EmptyQuery | veracity::Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(g: &Global) -> CliResult<PipelineConfig> {
    let mut c = match &g.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| veracity::Error::io(path, e))?;
            toml::from_str(&raw).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.seed {
        c.seed = v;
    }
    if let Some(v) = &g.claims {
        c.paths.claims = Some(v.clone());
    }
    if let Some(v) = &g.docs {
        c.paths.docs = Some(v.clone());
    }
    if let Some(v) = &g.index_dir {
        c.paths.index_dir = Some(v.clone());
    }
    if let Some(v) = &g.cache {
        c.paths.cache = Some(v.clone());
    }
    if let Some(v) = &g.model {
        c.paths.model = Some(v.clone());
    }
    if let Some(v) = g.mode {
        c.encoder.mode = v;
    }
    if let Some(v) = &g.encoder {
        c.encoder.backend = v.clone();
    }
    if let Some(v) = g.preset {
        c.dedup.preset = v;
    }
    if let Some(v) = g.head {
        c.head.kind = v;
    }
    if let Some(v) = g.k1 {
        c.retrieval.k1 = v;
    }
    if let Some(v) = g.b {
        c.retrieval.b = v;
    }
    if let Some(v) = g.first_k {
        c.retrieval.first_k = v;
    }
    if let Some(v) = g.final_k {
        c.retrieval.final_k = v;
    }
    if let Some(v) = &g.scorer {
        c.retrieval.scorer = Some(v.clone());
    }
    c.validate()?;
    Ok(c)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| usage(format!("--{flag} (or the config equivalent) is required")))
}

/// Line-record or table output, tagged with the run's config hash and seed.
struct Output {
    path: Option<PathBuf>,
    pretty: bool,
    run: RunInfo,
}

impl Output {
    fn tag(&self, mut v: Value) -> Value {
        if let Some(obj) = v.as_object_mut() {
            obj.insert("config_hash".into(), json!(self.run.config_hash));
            obj.insert("seed".into(), json!(self.run.seed));
        }
        v
    }

    fn records(&self, records: Vec<Value>, table: impl FnOnce() -> String) -> CliResult<()> {
        let body = if self.pretty {
            let mut t = table();
            let _ = writeln!(t, "config {} seed {}", self.run.config_hash, self.run.seed);
            t
        } else {
            let mut s = String::new();
            for r in records {
                s.push_str(&serde_json::to_string(&self.tag(r)).map_err(veracity::Error::from)?);
                s.push('\n');
            }
            s
        };
        match &self.path {
            Some(p) => atomic_write(p, body.as_bytes())?,
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes()).map_err(veracity::Error::from)?;
            }
        }
        Ok(())
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli.global)?;
    let out = Output {
        path: cli.global.out.clone(),
        pretty: cli.global.pretty,
        run: RunInfo::of(&config),
    };
    match cli.command {
        Command::Ingest {
            subword_counts,
            service_ner,
        } => ingest(&config, &out, subword_counts, service_ner),
        Command::Index => index(&config, &out),
        Command::Search { query } => search(&config, &out, &query),
        Command::Dedup { policy, threshold } => dedup(config, &out, policy, threshold),
        Command::Evidence { claim } => evidence(&config, &out, claim),
        Command::Train => train_cmd(&config, &out),
        Command::Evaluate { folds } => evaluate(config, &out, folds),
        Command::Verify { claim } => verify(&config, &out, &claim),
    }
}

fn service_backend(config: &PipelineConfig, what: &str) -> CliResult<HttpBackend> {
    let url = &config.encoder.backend;
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(usage(format!("{what} needs --encoder <service url>")));
    }
    Ok(HttpBackend::new(url))
}

fn ingest(config: &PipelineConfig, out: &Output, subword_counts: bool, service_ner: bool) -> CliResult<()> {
    let dir = required(&config.paths.index_dir, "index-dir")?;
    std::fs::create_dir_all(dir).map_err(|e| veracity::Error::io(dir, e))?;
    let mut records = Vec::new();
    let mut summary = json!({"record": "ingest"});

    if let Some(docs_path) = &config.paths.docs {
        let docs = load_documents(docs_path, ClaimFormat::from_path(docs_path))?;
        let service;
        let counter: &dyn TokenCounter = if subword_counts {
            service = service_backend(config, "--subword-counts")?;
            &service
        } else {
            &WhitespaceCounter
        };
        let paragraphs = build_paragraphs(&docs, config.retrieval.paragraph_tokens, counter)?;
        let store = ParagraphStore::new(paragraphs)?;
        store.save(&dir.join(PARAGRAPHS))?;
        save_documents(&dir.join(DOCUMENTS), &docs)?;
        summary["documents"] = json!(docs.len());
        summary["paragraphs"] = json!(store.len());
    }
    if let Some(claims_path) = &config.paths.claims {
        let mut claims = load_claims(claims_path, ClaimFormat::from_path(claims_path))?;
        let tagger = if service_ner {
            Some(service_backend(config, "--service-ner")?)
        } else {
            None
        };
        for c in &mut claims {
            let cat = categorize_claim(c, tagger.as_ref().map(|t| t as &dyn veracity::corpus::EntityTagger));
            c.types = cat.types;
        }
        save_claims(&dir.join(CLAIMS), &claims, ClaimFormat::Jsonl)?;
        summary["claims"] = json!(claims.len());
    }
    if summary.as_object().map_or(0, |o| o.len()) == 1 {
        return Err(usage("ingest needs --docs and/or --claims"));
    }
    records.push(summary.clone());
    out.records(records, || format!("{summary}\n"))
}

fn index(config: &PipelineConfig, out: &Output) -> CliResult<()> {
    let dir = required(&config.paths.index_dir, "index-dir")?;
    let store = ParagraphStore::load(&dir.join(PARAGRAPHS))?;
    let index = build_corpus_index(store.paragraphs(), config.retrieval.analyzer)?;
    let target = dir.join(INDEX);
    {
        let _lock = LockFile::acquire(&target)?;
        write_index(&index, &target)?;
    }
    let manifest = out.tag(json!({
        "record": "index",
        "paragraphs": index.doc_count(),
        "terms": index.terms().len(),
        "avg_doc_length": index.avg_doc_length(),
    }));
    atomic_write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest).map_err(veracity::Error::from)?.as_bytes())?;
    let table = format!(
        "indexed {} paragraphs, {} terms\n",
        index.doc_count(),
        index.terms().len()
    );
    out.records(vec![manifest], || table)
}

fn client(config: &PipelineConfig) -> CliResult<Arc<EncoderClient>> {
    Ok(Arc::new(config.encoder.client(config.paths.cache.as_deref())?))
}

fn scorer(config: &PipelineConfig, client: &Arc<EncoderClient>) -> CliResult<Option<Box<dyn RelevanceScorer>>> {
    match config.retrieval.scorer.as_deref() {
        None | Some("none") => Ok(None),
        Some(id) => Ok(Some(resolve_scorer(id, Some(client.clone()))?)),
    }
}

fn open_pipeline(config: &PipelineConfig) -> CliResult<Pipeline> {
    let dir = required(&config.paths.index_dir, "index-dir")?;
    let index = read_index(&dir.join(INDEX))?;
    let store = ParagraphStore::load(&dir.join(PARAGRAPHS))?;
    let docs: Vec<DocumentRecord> = load_documents(&dir.join(DOCUMENTS), ClaimFormat::Jsonl)?;
    let client = client(config)?;
    let scorer = scorer(config, &client)?;
    Ok(Pipeline::new(index, store, docs, scorer, client, config.clone())?)
}

fn finish(p: &Pipeline) -> CliResult<()> {
    Ok(p.client.flush()?)
}

fn search(config: &PipelineConfig, out: &Output, query: &str) -> CliResult<()> {
    if query.trim().is_empty() {
        return Err(usage("--query must not be empty"));
    }
    let p = open_pipeline(config)?;
    let stages = MultistageConfig {
        final_k: config.retrieval.final_k,
        ..config.retrieval.multistage()
    };
    let hits = multistage_retrieve(&p.index, p.scorer.as_deref(), &p.paragraphs, query, &stages)?;
    finish(&p)?;
    let records = hits
        .iter()
        .enumerate()
        .map(|(i, h)| json!({"rank": i + 1, "paragraph_id": h.paragraph_id, "score": h.score, "stage": h.stage}))
        .collect();
    out.records(records, || {
        let mut t = format!("{:<5} {:<28} {:>10}  stage\n", "rank", "paragraph", "score");
        for (i, h) in hits.iter().enumerate() {
            let _ = writeln!(t, "{:<5} {:<28} {:>10.6}  {:?}", i + 1, h.paragraph_id, h.score, h.stage);
        }
        t
    })
}

fn read_claims(config: &PipelineConfig) -> CliResult<Vec<ClaimRecord>> {
    let path = match (&config.paths.claims, &config.paths.index_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) if dir.join(CLAIMS).exists() => dir.join(CLAIMS),
        _ => return Err(usage("--claims is required (or ingest claims into --index-dir)")),
    };
    Ok(load_claims(&path, ClaimFormat::from_path(&path))?)
}

fn dedup(mut config: PipelineConfig, out: &Output, policy: Option<DedupPolicy>, threshold: Option<f64>) -> CliResult<()> {
    if let Some(p) = policy {
        config.dedup.policy = p;
    }
    if let Some(t) = threshold {
        config.dedup.preset = DedupPreset::Custom;
        config.dedup.threshold = Some(t);
    }
    let dedup_config = config.dedup.config()?;
    let claims = read_claims(&config)?;
    let index = build_claim_index(&claims, config.retrieval.analyzer)?;
    let client = client(&config)?;
    let scorer = scorer(&config, &client)?.ok_or_else(|| usage("dedup needs a scorer"))?;
    let pairs = find_similar_pairs(&claims, &index, scorer.as_ref(), &dedup_config, config.retrieval.bm25())?;
    let report = deduplicate(&claims, &pairs, config.dedup.policy)?;
    client.flush()?;
    let mut records = report.to_records();
    if let Some(last) = records.last_mut() {
        last["threshold"] = json!(dedup_config.threshold);
        last["preset"] = json!(dedup_config.preset);
    }
    out.records(records, || {
        let mut t = format!(
            "{} preset (threshold {}), policy {}\n",
            dedup_config.preset, dedup_config.threshold, json!(config.dedup.policy)
        );
        let _ = writeln!(t, "before: {} claims ({} True, {} False)", report.before.total, report.before.true_count, report.before.false_count);
        let _ = writeln!(t, "after:  {} claims ({} True, {} False)", report.after.total, report.after.true_count, report.after.false_count);
        for r in &report.removed {
            let _ = writeln!(t, "removed {} (similar to {}, {:.4})", r.id, r.trigger.other(&r.id), r.trigger.probability);
        }
        t
    })
}

fn evidence(config: &PipelineConfig, out: &Output, claim: Option<String>) -> CliResult<()> {
    let claims: Vec<(String, String)> = match claim {
        Some(text) if text.trim().is_empty() => return Err(usage("--claim must not be empty")),
        Some(text) => vec![("query".into(), text)],
        None => read_claims(config)?.into_iter().map(|c| (c.id, c.text)).collect(),
    };
    let p = open_pipeline(config)?;
    let mut sets = Vec::with_capacity(claims.len());
    for (id, text) in &claims {
        sets.push(p.evidence(id, text)?.1);
    }
    finish(&p)?;
    let records = sets.iter().map(|s| serde_json::to_value(s).expect("evidence serializes")).collect();
    out.records(records, || {
        let mut t = String::new();
        for s in &sets {
            let _ = writeln!(t, "{}", s.claim_id);
            for e in &s.sentences {
                let _ = writeln!(t, "  {:.4}  [{}] {}", e.similarity, e.source_doc_id, e.text);
            }
        }
        t
    })
}

/// Representation size read off the first example that carries encoder vectors.
fn feature_dim(examples: &[Example]) -> Option<usize> {
    examples.iter().find_map(|e| {
        let pair = e.features.pairs.iter().find_map(|p| {
            p.tokens
                .as_ref()
                .map(|t| t.cols())
                .or_else(|| p.pooled.as_ref().map(|t| t.cols()))
        });
        pair.or_else(|| e.features.graph.as_ref().map(|g| g.features.cols().saturating_sub(3)).filter(|&d| d > 0))
    })
}

fn training_data(config: &PipelineConfig) -> CliResult<(Pipeline, Vec<Example>, usize)> {
    let claims = read_claims(config)?;
    let p = open_pipeline(config)?;
    let examples = p.examples(&claims)?;
    finish(&p)?;
    let dim = feature_dim(&examples).unwrap_or(config.encoder.encoder_dim);
    Ok((p, examples, dim))
}

fn train_cmd(config: &PipelineConfig, out: &Output) -> CliResult<()> {
    let model_path = required(&config.paths.model, "model")?;
    let (_, examples, dim) = training_data(config)?;
    let mut model = Model::new(config.head.head_config(dim), config.seed)?;
    let train_config = config.head.train_config(config.seed);
    let report = train(&mut model, &examples, &train_config)?;
    model.provenance = Some(json!({
        "config_hash": out.run.config_hash,
        "seed": out.run.seed,
        "examples": examples.len(),
        "final_loss": report.epoch_losses.last(),
    }));
    model.save(model_path)?;
    let mut records: Vec<Value> = report
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(i, l)| json!({"record": "epoch", "epoch": i, "loss": l}))
        .collect();
    records.push(json!({
        "record": "model",
        "head": config.head.kind,
        "path": model_path,
        "examples": examples.len(),
        "steps": report.steps,
    }));
    out.records(records, || {
        let mut t = format!("{} head on {} claims, {} steps\n", config.head.kind, examples.len(), report.steps);
        for (i, l) in report.epoch_losses.iter().enumerate() {
            let _ = writeln!(t, "epoch {i:>4}  loss {l:.6}");
        }
        t
    })
}

fn evaluate(mut config: PipelineConfig, out: &Output, folds: Option<usize>) -> CliResult<()> {
    if let Some(k) = folds {
        config.head.folds = k;
    }
    let (_, examples, dim) = training_data(&config)?;
    let head_config = config.head.head_config(dim);
    let train_config = config.head.train_config(config.seed);
    let seed = config.seed;
    let report = kfold_evaluate(&examples, config.head.folds, &train_config, |fold| {
        Model::new(head_config, seed.wrapping_add(fold as u64))
    })?;
    let record = serde_json::to_value(&report).map_err(veracity::Error::from)?;
    out.records(vec![record], || report.table())
}

fn verify(config: &PipelineConfig, out: &Output, claim: &str) -> CliResult<()> {
    if claim.trim().is_empty() {
        return Err(usage("--claim must not be empty"));
    }
    let model_path = required(&config.paths.model, "model")?;
    let model = Model::load(model_path)?;
    let p = open_pipeline(config)?;
    let record = p.verify(&model, claim)?;
    finish(&p)?;
    let value = serde_json::to_value(&record).map_err(veracity::Error::from)?;
    out.records(vec![value], || {
        let mut t = format!(
            "{}\nverdict: {} (True {:.4}, False {:.4}) by {}\n",
            record.claim, record.verdict, record.probabilities.true_, record.probabilities.false_, record.head
        );
        for e in &record.evidence {
            let _ = writeln!(t, "  {:.4}  {}  <{}>", e.similarity, e.text, e.source_url);
        }
        t
    })
}
