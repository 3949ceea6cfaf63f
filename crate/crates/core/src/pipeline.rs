//! Stage orchestration: an in-memory experiment runner plus the cached,
//! file-backed stage graph behind the command-line tool.
//!
//! Each stage reads its inputs from the work directory, writes its outputs
//! atomically (temp file, then rename) and records sha256 hashes of inputs,
//! outputs and its slice of the configuration in `manifest.json`. A stage
//! whose recorded hashes still match is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{heuristic_score, BaselineWeights};
use crate::centrality::{CentralityVector, EigenConfig};
use crate::embed::{node_centroids, train_skipgram, training_sentences, NodeSemantics, SkipGramConfig, WordEmbeddings};
use crate::error::{Error, Result};
use crate::eval::{
    compare_order, gate_report_from_shares, hit_at_k, write_compare_csv, CompareRow, GateReport, RankingReport,
    DEFAULT_KS,
};
use crate::features::{assemble_features, validate, write_pca_csv, NodeFeatures, ValidationConfig, ValidationReport};
use crate::graphs::{build_semantic_network, build_structure_network, quantile_threshold, StructureWeighting, WeightedGraph};
use crate::model::{Checkpoint, FusionKind, FusionModel, GraphOperators};
use crate::orgdata::{
    generate_synthetic_org, load_email_log, load_roster, read_email_log, read_roster, write_email_log, write_roster,
    EmailRecord, OrgRoster, SyntheticOrgConfig,
};
use crate::textprep::{build_corpus_stats, load_blocklist, prune_tokens, PruneConfig};
use crate::trainer::{make_split, train, Split, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub emails: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    /// Extra text for the skip-gram corpus, one document per line (job
    /// descriptions and the like).
    pub corpus: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            emails: None,
            roster: None,
            blocklist: None,
            corpus: None,
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Cosine threshold of the semantic network.
    pub tau: f64,
    /// When set, tau is this quantile of the off-diagonal centroid cosines.
    pub tau_quantile: Option<f64>,
    pub structure_weighting: StructureWeighting,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            tau: 0.75,
            tau_quantile: None,
            structure_weighting: StructureWeighting::Count,
        }
    }
}

/// Everything a run needs. The top-level `seed` overrides the seeds of the
/// synthetic generator, skip-gram, split, model and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub seed: u64,
    pub synthetic: Option<SyntheticOrgConfig>,
    pub prune: PruneConfig,
    pub embedding: SkipGramConfig,
    pub graphs: GraphConfig,
    pub centrality: EigenConfig,
    pub validation: ValidationConfig,
    pub baseline: BaselineWeights,
    pub train: TrainConfig,
    pub models: Vec<FusionKind>,
    pub ks: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            seed: 7,
            synthetic: None,
            prune: PruneConfig::default(),
            embedding: SkipGramConfig::default(),
            graphs: GraphConfig::default(),
            centrality: EigenConfig::default(),
            validation: ValidationConfig::default(),
            baseline: BaselineWeights::default(),
            train: TrainConfig::default(),
            models: FusionKind::ALL.to_vec(),
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Copy with every component seed set from `seed`.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(s) = c.synthetic.as_mut() {
            s.rng_seed = self.seed;
        }
        c.embedding.seed = self.seed;
        c.train.seed = self.seed;
        c.validation.seed = self.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.graphs.tau > -1.0 && self.graphs.tau < 1.0) {
            return Err(Error::Config(format!("tau {} outside (-1, 1)", self.graphs.tau)));
        }
        if let Some(q) = self.graphs.tau_quantile {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("tau_quantile {q} outside [0, 1]")));
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("ks must be non-empty and positive".into()));
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        self.baseline.validate()?;
        self.train.validate()
    }
}

/// All intermediate products of one organization, held in memory.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub roster: OrgRoster,
    pub records: Vec<EmailRecord>,
    pub embeddings: WordEmbeddings,
    pub skipgram_loss: Vec<f64>,
    pub semantics: NodeSemantics,
    pub structure: WeightedGraph,
    pub semantic: WeightedGraph,
    pub tau: f64,
    pub centrality: CentralityVector,
    pub features: NodeFeatures,
    pub ops: GraphOperators,
    pub split: Split,
}

/// Prunes subjects, trains skip-gram and pools node centroids.
pub fn embed_step(
    records: &[EmailRecord],
    roster: &OrgRoster,
    blocklist: &BTreeSet<String>,
    corpus: &[Vec<String>],
    cfg: &PipelineConfig,
) -> Result<(WordEmbeddings, Vec<f64>, NodeSemantics)> {
    let stats = build_corpus_stats(records)?;
    let pruned = prune_tokens(records, &stats, blocklist, &cfg.prune);
    log::info!("pruning kept {} of {} emails", pruned.len(), records.len());
    let sentences = training_sentences(&pruned, corpus);
    let (emb, losses) = train_skipgram(&sentences, &cfg.embedding)?;
    let sem = node_centroids(&pruned, &emb, roster)?;
    Ok((emb, losses, sem))
}

/// Structure and semantic networks plus the threshold actually used.
pub fn graph_step(
    records: &[EmailRecord],
    sem: &NodeSemantics,
    roster: &OrgRoster,
    cfg: &GraphConfig,
) -> Result<(WeightedGraph, WeightedGraph, f64)> {
    let g_str = build_structure_network(records, roster, cfg.structure_weighting)?;
    let tau = match cfg.tau_quantile {
        Some(q) => quantile_threshold(sem, q),
        None => cfg.tau,
    };
    let g_ssim = build_semantic_network(sem, tau)?;
    log::info!(
        "structure network: {} edges; semantic network: {} edges at tau {tau:.4}",
        g_str.n_edges(),
        g_ssim.n_edges()
    );
    Ok((g_str, g_ssim, tau))
}

pub fn prepare(
    roster: OrgRoster,
    records: Vec<EmailRecord>,
    blocklist: &BTreeSet<String>,
    corpus: &[Vec<String>],
    cfg: &PipelineConfig,
) -> Result<Prepared> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let (embeddings, skipgram_loss, semantics) = embed_step(&records, &roster, blocklist, corpus, &cfg)?;
    let (structure, semantic, tau) = graph_step(&records, &semantics, &roster, &cfg.graphs)?;
    let centrality = CentralityVector::compute(&structure, cfg.centrality)?;
    let features = assemble_features(&semantics, &centrality)?;
    let ops = GraphOperators::build(&structure, &semantic)?;
    let split = make_split(&roster, cfg.train.query_holdout_fraction, cfg.seed)?;
    Ok(Prepared {
        roster,
        records,
        embeddings,
        skipgram_loss,
        semantics,
        structure,
        semantic,
        tau,
        centrality,
        features,
        ops,
        split,
    })
}

/// Generates the synthetic organization for `cfg.seed` and prepares it.
pub fn prepare_synthetic(cfg: &PipelineConfig) -> Result<Prepared> {
    let cfg = cfg.resolved();
    let syn = cfg.synthetic.clone().unwrap_or_else(|| SyntheticOrgConfig {
        rng_seed: cfg.seed,
        ..Default::default()
    });
    let (roster, records) = generate_synthetic_org(&syn)?;
    prepare(roster, records, &BTreeSet::new(), &[], &cfg)
}

impl Prepared {
    pub fn covered(&self) -> Vec<bool> {
        self.semantics.coverage.iter().map(|&c| c > 0).collect()
    }

    pub fn validation(&self, cfg: &ValidationConfig) -> Result<ValidationReport> {
        validate(&self.features, &self.semantics, &self.roster, cfg)
    }

    pub fn baseline_report(&self, w: &BaselineWeights, ks: &[usize], seed: u64) -> RankingReport {
        let covered = self.covered();
        let scorer = |i: usize, j: usize| heuristic_score(i, j, &self.features, &covered, w).score;
        hit_at_k(&scorer, &self.roster, &self.split, ks, "heuristic", seed)
    }

    pub fn train_model(&self, kind: FusionKind, cfg: &TrainConfig) -> Result<TrainOutcome> {
        train(kind, &self.ops, &self.features, &self.roster, &self.split, cfg)
    }

    pub fn model_report(&self, model: &FusionModel, ks: &[usize]) -> Result<RankingReport> {
        let fused = model.forward(&self.ops, self.features.matrix.view())?;
        let scorer = |i: usize, j: usize| fused.score(i, j);
        Ok(hit_at_k(&scorer, &self.roster, &self.split, ks, model.kind.name(), model.seed))
    }

    /// Per-node structural gate share of a gating model.
    pub fn gate_shares(&self, model: &FusionModel) -> Result<Vec<f64>> {
        if !model.kind.has_gate() {
            return Err(Error::Config(format!("{} has no gate", model.kind)));
        }
        let fused = model.forward(&self.ops, self.features.matrix.view())?;
        Ok(fused.gate.expect("gated kinds return gates").structural_share())
    }
}

// ---------------------------------------------------------------------------
// File-backed stages

/// A unit of work in the stage graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Synth,
    Embed,
    Graphs,
    Features,
    Validate,
    Baseline,
    Train(FusionKind),
    Evaluate(FusionKind),
    Compare,
    Gates,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Synth => "synth",
            Stage::Embed => "embed",
            Stage::Graphs => "graphs",
            Stage::Features => "features",
            Stage::Validate => "validate",
            Stage::Baseline => "baseline",
            Stage::Train(_) => "train",
            Stage::Evaluate(_) => "evaluate",
            Stage::Compare => "compare",
            Stage::Gates => "gates",
        }
    }

    /// Manifest key; model stages carry their kind.
    pub fn key(self) -> String {
        match self {
            Stage::Train(k) | Stage::Evaluate(k) => format!("{}:{}", self.name(), k.name()),
            _ => self.name().to_string(),
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

const ROSTER: &str = "data/roster.csv";
const EMAILS: &str = "data/emails.csv";
const EMBEDDINGS: &str = "embed/embeddings.json";
const SKIPGRAM_LOSS: &str = "embed/skipgram_loss.csv";
const CENTROIDS: &str = "embed/centroids.csv";
const STRUCTURE_EDGES: &str = "graphs/structure.csv";
const STRUCTURE_HEADER: &str = "graphs/structure.json";
const SEMANTIC_EDGES: &str = "graphs/semantic.csv";
const SEMANTIC_HEADER: &str = "graphs/semantic.json";
const CENTRALITY: &str = "features/centrality.csv";
const FEATURES: &str = "features/features.csv";
const SPLIT: &str = "features/split.json";
const VALIDATION: &str = "validate/validation_report.json";
const F1_TABLE: &str = "validate/f1_table.csv";
const PCA: &str = "validate/pca.csv";
const BASELINE_REPORT: &str = "baseline/report.json";
const BASELINE_RANKINGS: &str = "baseline/rankings.csv";
const COMPARE_CSV: &str = "compare/compare.csv";
const COMPARE_JSON: &str = "compare/compare.json";
const GATES_JSON: &str = "gates/gates.json";
const GATES_CSV: &str = "gates/node_gates.csv";

pub fn checkpoint_path(kind: FusionKind) -> String {
    format!("models/{}/checkpoint.json", kind.name())
}

pub fn loss_curve_path(kind: FusionKind) -> String {
    format!("models/{}/loss_curve.csv", kind.name())
}

pub fn report_path(kind: FusionKind) -> String {
    format!("models/{}/report.json", kind.name())
}

pub fn rankings_path(kind: FusionKind) -> String {
    format!("models/{}/rankings.csv", kind.name())
}

/// Hashes recorded for one completed stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn producer_hash(&self, rel: &str) -> Option<&String> {
        self.stages.values().find_map(|r| r.outputs.get(rel))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Which stage produces the data files when they are missing.
fn data_stage(rel: &str) -> Option<&'static str> {
    let stage = match rel.split('/').next()? {
        "data" => "ingest",
        "embed" => "embed",
        "graphs" => "graphs",
        "features" => "features",
        "validate" => "validate",
        "baseline" => "baseline",
        "compare" => "compare",
        "gates" => "gates",
        "models" if rel.ends_with("checkpoint.json") || rel.ends_with("loss_curve.csv") => "train",
        "models" => "evaluate",
        _ => return None,
    };
    Some(stage)
}

/// Stage runner bound to one work directory.
#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    workdir: PathBuf,
}

/// Inputs and outputs gathered while a stage runs.
struct StageRun {
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, Vec<u8>>,
}

impl StageRun {
    fn new() -> Self {
        Self {
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn output(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.outputs.insert(rel.into(), bytes);
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let cfg = cfg.resolved();
        cfg.validate()?;
        let workdir = cfg.paths.workdir.clone();
        fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        Ok(Self { cfg, workdir })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.path(MANIFEST);
        if !p.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save_manifest(&self, m: &Manifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        write_atomic(&self.path(MANIFEST), text.as_bytes())
    }

    /// Reads a work-directory artifact, checking it against the hash its
    /// producer recorded.
    fn read(&self, run: &mut StageRun, manifest: &Manifest, rel: &str) -> Result<Vec<u8>> {
        let path = self.path(rel);
        let stage = data_stage(rel).unwrap_or("ingest");
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact { stage, path }),
            Err(e) => return Err(Error::io(path, e)),
        };
        let hash = sha256_hex(&bytes);
        if let Some(recorded) = manifest.producer_hash(rel) {
            if *recorded != hash {
                return Err(Error::StaleArtifact { stage, path });
            }
        }
        run.inputs.insert(rel.to_string(), hash);
        Ok(bytes)
    }

    /// Reads a file from outside the work directory.
    fn read_external(&self, run: &mut StageRun, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        run.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn stage_config(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        let v = match stage {
            Stage::Ingest => serde_json::json!({}),
            Stage::Synth => serde_json::to_value(c.synthetic.clone().unwrap_or_else(|| SyntheticOrgConfig {
                rng_seed: c.seed,
                ..Default::default()
            }))?,
            Stage::Embed => serde_json::json!({ "prune": c.prune, "embedding": c.embedding }),
            Stage::Graphs => serde_json::to_value(&c.graphs)?,
            Stage::Features => serde_json::json!({
                "centrality": c.centrality,
                "holdout": c.train.query_holdout_fraction,
                "seed": c.seed,
            }),
            Stage::Validate => serde_json::to_value(&c.validation)?,
            Stage::Baseline => serde_json::json!({ "weights": c.baseline, "ks": c.ks, "seed": c.seed }),
            Stage::Train(k) => serde_json::json!({ "kind": k, "train": c.train }),
            Stage::Evaluate(k) => serde_json::json!({ "kind": k, "ks": c.ks }),
            Stage::Compare => serde_json::json!({ "models": c.models, "ks": c.ks }),
            Stage::Gates => serde_json::json!({}),
        };
        Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }

    /// Stages whose outputs `stage` reads, in execution order.
    fn upstream(&self, stage: Stage) -> Vec<Stage> {
        let source = if self.cfg.paths.emails.is_some() && self.cfg.synthetic.is_none() {
            Stage::Ingest
        } else {
            Stage::Synth
        };
        let prefix = |s: Stage| -> Vec<Stage> {
            let chain = [source, Stage::Embed, Stage::Graphs, Stage::Features];
            let upto = match s {
                Stage::Ingest | Stage::Synth => 0,
                Stage::Embed => 1,
                Stage::Graphs => 2,
                Stage::Features => 3,
                _ => 4,
            };
            chain[..upto].to_vec()
        };
        match stage {
            Stage::Evaluate(k) => [prefix(stage), vec![Stage::Train(k)]].concat(),
            Stage::Gates => [prefix(stage), vec![Stage::Train(FusionKind::Gating)]].concat(),
            Stage::Compare => {
                let mut v = prefix(stage);
                v.push(Stage::Baseline);
                for &k in &self.cfg.models {
                    v.push(Stage::Train(k));
                    v.push(Stage::Evaluate(k));
                }
                v
            }
            _ => prefix(stage),
        }
    }

    /// Runs `stage`; with `from_scratch` its upstream stages run first
    /// (each skipped when already up to date).
    pub fn run(&self, stage: Stage, from_scratch: bool) -> Result<()> {
        if from_scratch {
            for s in self.upstream(stage) {
                self.run_one(s)?;
            }
        }
        self.run_one(stage)
    }

    /// The full graph: data, embeddings, graphs, features, validation,
    /// baseline, every configured model, comparison and gate analysis.
    pub fn run_all(&self) -> Result<()> {
        self.run(Stage::Compare, true)?;
        self.run_one(Stage::Validate)?;
        if self.cfg.models.contains(&FusionKind::Gating) {
            self.run_one(Stage::Gates)?;
        }
        Ok(())
    }

    fn run_one(&self, stage: Stage) -> Result<()> {
        let mut manifest = self.manifest()?;
        let config = self.stage_config(stage)?;
        let mut run = StageRun::new();
        // Input reading doubles as the missing/stale check, so the cache test
        // happens after the inputs are known.
        let work = self.execute(stage, &mut run, &manifest)?;
        let key = stage.key();
        if let Some(prev) = manifest.stages.get(&key) {
            let outputs_intact = prev.outputs.iter().all(|(rel, h)| {
                fs::read(self.path(rel)).map(|b| sha256_hex(&b) == *h).unwrap_or(false)
            });
            if prev.config == config && prev.inputs == run.inputs && outputs_intact {
                log::info!("{key}: up to date");
                return Ok(());
            }
        }
        let outputs = work()?;
        let mut record = StageRecord {
            config,
            inputs: run.inputs,
            outputs: BTreeMap::new(),
        };
        for (rel, bytes) in outputs {
            write_atomic(&self.path(&rel), &bytes)?;
            record.outputs.insert(rel, sha256_hex(&bytes));
        }
        // A rerun upstream invalidates nothing here; downstream stages see
        // changed input hashes and recompute.
        manifest.stages.insert(key.clone(), record);
        self.save_manifest(&manifest)?;
        log::info!("{key}: done");
        Ok(())
    }

    /// Reads the stage's inputs now and returns the deferred computation.
    fn execute<'a>(
        &'a self,
        stage: Stage,
        run: &mut StageRun,
        m: &Manifest,
    ) -> Result<Box<dyn FnOnce() -> Result<BTreeMap<String, Vec<u8>>> + 'a>> {
        let cfg = &self.cfg;
        Ok(match stage {
            Stage::Ingest => {
                let emails = cfg
                    .paths
                    .emails
                    .clone()
                    .ok_or_else(|| Error::Config("paths.emails is not set".into()))?;
                let roster_path = cfg
                    .paths
                    .roster
                    .clone()
                    .ok_or_else(|| Error::Config("paths.roster is not set".into()))?;
                self.read_external(run, &emails)?;
                self.read_external(run, &roster_path)?;
                Box::new(move || {
                    let roster = load_roster(&roster_path)?;
                    let log = load_email_log(&emails, &roster)?;
                    if log.dropped > 0 {
                        log::warn!("dropped {} self-addressed or empty emails", log.dropped);
                    }
                    let mut out = StageRun::new();
                    out.output(ROSTER, to_bytes(|w| write_roster(w, &roster))?);
                    out.output(EMAILS, to_bytes(|w| write_email_log(w, &log.records))?);
                    Ok(out.outputs)
                })
            }
            Stage::Synth => {
                let syn = cfg.synthetic.clone().unwrap_or_else(|| SyntheticOrgConfig {
                    rng_seed: cfg.seed,
                    ..Default::default()
                });
                Box::new(move || {
                    let (roster, records) = generate_synthetic_org(&syn)?;
                    let mut out = StageRun::new();
                    out.output(ROSTER, to_bytes(|w| write_roster(w, &roster))?);
                    out.output(EMAILS, to_bytes(|w| write_email_log(w, &records))?);
                    Ok(out.outputs)
                })
            }
            Stage::Embed => {
                let (roster, records) = self.load_data(run, m)?;
                let blocklist = match &cfg.paths.blocklist {
                    Some(p) => {
                        self.read_external(run, p)?;
                        load_blocklist(p)?
                    }
                    None => BTreeSet::new(),
                };
                let corpus: Vec<Vec<String>> = match &cfg.paths.corpus {
                    Some(p) => String::from_utf8_lossy(&self.read_external(run, p)?)
                        .lines()
                        .map(crate::orgdata::tokenize_subject)
                        .filter(|t| !t.is_empty())
                        .collect(),
                    None => Vec::new(),
                };
                Box::new(move || {
                    let (emb, losses, sem) = embed_step(&records, &roster, &blocklist, &corpus, cfg)?;
                    let mut out = StageRun::new();
                    out.output(EMBEDDINGS, emb.to_json()?.into_bytes());
                    out.output(CENTROIDS, to_bytes(|w| sem.write_csv(w))?);
                    out.output(SKIPGRAM_LOSS, series_csv("epoch", "loss", &losses));
                    Ok(out.outputs)
                })
            }
            Stage::Graphs => {
                let (roster, records) = self.load_data(run, m)?;
                let sem = self.load_semantics(run, m)?;
                Box::new(move || {
                    let (g_str, g_ssim, _) = graph_step(&records, &sem, &roster, &cfg.graphs)?;
                    let mut out = StageRun::new();
                    out.output(STRUCTURE_EDGES, to_bytes(|w| g_str.write_edges(w))?);
                    out.output(STRUCTURE_HEADER, g_str.header_json()?.into_bytes());
                    out.output(SEMANTIC_EDGES, to_bytes(|w| g_ssim.write_edges(w))?);
                    out.output(SEMANTIC_HEADER, g_ssim.header_json()?.into_bytes());
                    Ok(out.outputs)
                })
            }
            Stage::Features => {
                let roster = self.load_roster(run, m)?;
                let sem = self.load_semantics(run, m)?;
                let g_str = self.load_graph(run, m, STRUCTURE_HEADER, STRUCTURE_EDGES)?;
                Box::new(move || {
                    let cent = CentralityVector::compute(&g_str, cfg.centrality)?;
                    let features = assemble_features(&sem, &cent)?;
                    let split = make_split(&roster, cfg.train.query_holdout_fraction, cfg.seed)?;
                    let mut out = StageRun::new();
                    out.output(CENTRALITY, to_bytes(|w| cent.write_csv(w))?);
                    out.output(FEATURES, to_bytes(|w| features.write_csv(w))?);
                    out.output(SPLIT, json_bytes(&split)?);
                    Ok(out.outputs)
                })
            }
            Stage::Validate => {
                let roster = self.load_roster(run, m)?;
                let sem = self.load_semantics(run, m)?;
                let features = self.load_features(run, m)?;
                Box::new(move || {
                    let report = validate(&features, &sem, &roster, &cfg.validation)?;
                    let mut out = StageRun::new();
                    out.output(F1_TABLE, to_bytes(|w| report.write_f1_csv(w))?);
                    out.output(VALIDATION, json_bytes(&report)?);
                    let km = crate::features::kmeans(
                        sem.centroids.select(ndarray::Axis(0), &crate::features::covered_rows(&sem)).view(),
                        cfg.validation.kmeans_k,
                        cfg.validation.kmeans_restarts,
                        cfg.validation.seed,
                    )?;
                    out.output(PCA, to_bytes(|w| write_pca_csv(&sem, &roster, Some(&km.labels), w))?);
                    Ok(out.outputs)
                })
            }
            Stage::Baseline => {
                let roster = self.load_roster(run, m)?;
                let sem = self.load_semantics(run, m)?;
                let features = self.load_features(run, m)?;
                let split = self.load_split(run, m)?;
                Box::new(move || {
                    let covered: Vec<bool> = sem.coverage.iter().map(|&c| c > 0).collect();
                    let scorer = |i: usize, j: usize| heuristic_score(i, j, &features, &covered, &cfg.baseline).score;
                    let report = hit_at_k(&scorer, &roster, &split, &cfg.ks, "heuristic", cfg.seed);
                    let mut out = StageRun::new();
                    out.output(BASELINE_RANKINGS, to_bytes(|w| report.write_rankings_csv(w))?);
                    out.output(BASELINE_REPORT, json_bytes(&report)?);
                    Ok(out.outputs)
                })
            }
            Stage::Train(kind) => {
                let roster = self.load_roster(run, m)?;
                let features = self.load_features(run, m)?;
                let split = self.load_split(run, m)?;
                let ops = self.load_ops(run, m)?;
                Box::new(move || {
                    let outcome = train(kind, &ops, &features, &roster, &split, &cfg.train)?;
                    if outcome.negatives_with_replacement {
                        log::warn!("{kind}: negatives drawn with replacement");
                    }
                    let mut out = StageRun::new();
                    out.output(checkpoint_path(kind), json_bytes(&outcome.model.to_checkpoint())?);
                    out.output(loss_curve_path(kind), series_csv("epoch", "loss", &outcome.loss_curve));
                    Ok(out.outputs)
                })
            }
            Stage::Evaluate(kind) => {
                let roster = self.load_roster(run, m)?;
                let features = self.load_features(run, m)?;
                let split = self.load_split(run, m)?;
                let ops = self.load_ops(run, m)?;
                let model = self.load_model(run, m, kind)?;
                Box::new(move || {
                    let fused = model.forward(&ops, features.matrix.view())?;
                    let scorer = |i: usize, j: usize| fused.score(i, j);
                    let report = hit_at_k(&scorer, &roster, &split, &cfg.ks, kind.name(), model.seed);
                    let mut out = StageRun::new();
                    out.output(rankings_path(kind), to_bytes(|w| report.write_rankings_csv(w))?);
                    out.output(report_path(kind), json_bytes(&report)?);
                    Ok(out.outputs)
                })
            }
            Stage::Compare => {
                let mut rows = Vec::new();
                for &kind in &cfg.models {
                    let report: RankingReport = serde_json::from_slice(&self.read(run, m, &report_path(kind))?)?;
                    rows.push(CompareRow {
                        model: report.model_kind,
                        hit_at: report.hit_at,
                    });
                }
                if self.path(BASELINE_REPORT).exists() {
                    let report: RankingReport = serde_json::from_slice(&self.read(run, m, BASELINE_REPORT)?)?;
                    rows.push(CompareRow {
                        model: report.model_kind,
                        hit_at: report.hit_at,
                    });
                }
                let main_k = cfg.ks.iter().copied().max().unwrap_or(100);
                Box::new(move || {
                    sort_compare_rows(&mut rows, main_k);
                    let mut out = StageRun::new();
                    out.output(COMPARE_CSV, to_bytes(|w| write_compare_csv(&rows, &cfg.ks, w))?);
                    out.output(COMPARE_JSON, json_bytes(&rows)?);
                    Ok(out.outputs)
                })
            }
            Stage::Gates => {
                let roster = self.load_roster(run, m)?;
                let features = self.load_features(run, m)?;
                let ops = self.load_ops(run, m)?;
                let model = self.load_model(run, m, FusionKind::Gating)?;
                Box::new(move || {
                    let fused = model.forward(&ops, features.matrix.view())?;
                    let shares = fused.gate.expect("gating returns gates").structural_share();
                    let report: GateReport = gate_report_from_shares(&shares, &roster);
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["employee_id", "job_family", "role", "structural_share"])?;
                    for (e, s) in roster.employees().iter().zip(&shares) {
                        w.write_record([e.id.as_str(), &e.job_family, &e.role, &format!("{s:e}")])?;
                    }
                    let csv_bytes = w.into_inner().map_err(|e| Error::io(GATES_CSV, e.into_error()))?;
                    let mut out = StageRun::new();
                    out.output(GATES_JSON, json_bytes(&report)?);
                    out.output(GATES_CSV, csv_bytes);
                    Ok(out.outputs)
                })
            }
        })
    }

    fn load_roster(&self, run: &mut StageRun, m: &Manifest) -> Result<OrgRoster> {
        let bytes = self.read(run, m, ROSTER)?;
        read_roster(bytes.as_slice(), ROSTER)
    }

    fn load_data(&self, run: &mut StageRun, m: &Manifest) -> Result<(OrgRoster, Vec<EmailRecord>)> {
        let roster = self.load_roster(run, m)?;
        let bytes = self.read(run, m, EMAILS)?;
        let log = read_email_log(bytes.as_slice(), EMAILS, &roster)?;
        Ok((roster, log.records))
    }

    fn load_semantics(&self, run: &mut StageRun, m: &Manifest) -> Result<NodeSemantics> {
        NodeSemantics::read_csv(self.read(run, m, CENTROIDS)?.as_slice())
    }

    fn load_features(&self, run: &mut StageRun, m: &Manifest) -> Result<NodeFeatures> {
        NodeFeatures::read_csv(self.read(run, m, FEATURES)?.as_slice())
    }

    fn load_split(&self, run: &mut StageRun, m: &Manifest) -> Result<Split> {
        Ok(serde_json::from_slice(&self.read(run, m, SPLIT)?)?)
    }

    fn load_graph(&self, run: &mut StageRun, m: &Manifest, header: &str, edges: &str) -> Result<WeightedGraph> {
        let h = self.read(run, m, header)?;
        let e = self.read(run, m, edges)?;
        WeightedGraph::read(&String::from_utf8_lossy(&h), e.as_slice())
    }

    fn load_ops(&self, run: &mut StageRun, m: &Manifest) -> Result<GraphOperators> {
        let g_str = self.load_graph(run, m, STRUCTURE_HEADER, STRUCTURE_EDGES)?;
        let g_ssim = self.load_graph(run, m, SEMANTIC_HEADER, SEMANTIC_EDGES)?;
        GraphOperators::build(&g_str, &g_ssim)
    }

    fn load_model(&self, run: &mut StageRun, m: &Manifest, kind: FusionKind) -> Result<FusionModel> {
        let c: Checkpoint = serde_json::from_slice(&self.read(run, m, &checkpoint_path(kind))?)?;
        FusionModel::from_checkpoint(&c)
    }

    /// Loads a trained model with the graphs and features it needs, for
    /// ad-hoc recommendation queries.
    pub fn load_for_inference(&self, kind: FusionKind) -> Result<(FusionModel, GraphOperators, NodeFeatures)> {
        let m = self.manifest()?;
        let mut run = StageRun::new();
        let model = self.load_model(&mut run, &m, kind)?;
        let ops = self.load_ops(&mut run, &m)?;
        let features = self.load_features(&mut run, &m)?;
        Ok((model, ops, features))
    }
}

/// Descending by Hit@`k`, ties in the canonical model order.
pub fn sort_compare_rows(rows: &mut [CompareRow], k: usize) {
    rows.sort_by(|a, b| {
        let ha = a.hit_at.get(&k).copied().unwrap_or(f64::NEG_INFINITY);
        let hb = b.hit_at.get(&k).copied().unwrap_or(f64::NEG_INFINITY);
        hb.total_cmp(&ha).then(compare_order(&a.model).cmp(&compare_order(&b.model)))
    });
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn series_csv(index: &str, value: &str, values: &[f64]) -> Vec<u8> {
    let mut s = format!("{index},{value}\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    s.into_bytes()
}
