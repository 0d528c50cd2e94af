//! End-to-end experiment runs with per-run artifact directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelConfig};
use super::split::{split_dataset, training_subset, DatasetSplit};
use super::stages::{prepare_corpus, ReportData, StageContext};
use crate::classifiers::{cross_validate, train, ModelFile, MODEL_FORMAT_VERSION};
use crate::deid::LookupTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate, roc_curve, write_roc_csv, EvalReport, ScoredInstance};
use crate::features::{
    apply_scaler, fit_scaler, fit_vocab, structured_features, tokenize_normalize, vectorize_tokens, FeatureVector,
    Scaler, DEFAULT_VOCAB_CAP, STRUCTURED_DIM,
};
use crate::neural::{pretrain_cbow, train_network_with, write_loss_csv, NeuralDataset, Network, TokenCodec};
use crate::ocr::OcrEngine;
use crate::segment::{write_instances_csv, GoldRecord, Instance, Label};
use crate::synth::{read_manifest, ManifestEntry, LOOKUP_FILE};
use crate::util::sha256_hex;

pub const RUN_FILE: &str = "run.json";
pub const SCORES_FILE: &str = "scores.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Re-run even when a completed record exists.
    pub force: bool,
    /// OCR backend for manifests that list page images.
    pub engine: Option<Arc<dyn OcrEngine>>,
    /// Cache-key tag for the engine.
    pub engine_tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed { stage: String, cause: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub corpus_hash: String,
    pub run_dir: PathBuf,
    #[serde(default)]
    pub split_sizes: SplitSizes,
    /// Present iff the run completed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalReport>,
    /// Fitted artifacts (vocabulary, scaler, model, checkpoints, ...) by name.
    #[serde(default)]
    pub artifacts: BTreeMap<String, ArtifactRef>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(fs::File::open(run_dir.join(RUN_FILE))?)?)
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Scored test instances written by a completed run.
    pub fn load_scores(&self) -> Result<Vec<ScoredInstance>> {
        Ok(serde_json::from_reader(fs::File::open(self.run_dir.join(SCORES_FILE))?)?)
    }

    /// Hashes of the artifacts fitted on training/validation data only.
    pub fn fitted_hashes(&self) -> BTreeMap<String, String> {
        self.artifacts
            .iter()
            .filter(|(k, _)| FITTED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.sha256.clone()))
            .collect()
    }
}

const FITTED: [&str; 7] = ["vocab", "scaler", "model", "codec", "embeddings", "checkpoint", "cv"];

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Hash over the manifest, every page file, and the lookup table.
pub fn corpus_hash(entries: &[ManifestEntry], lookup_path: Option<&Path>) -> Result<String> {
    let mut acc = String::new();
    for e in entries {
        acc.push_str(&serde_json::to_string(&(&e.report_id, &e.gold_ahi, &e.gold_sao2))?);
        for p in &e.pages {
            acc.push(' ');
            acc.push_str(&sha256_hex(&fs::read(p)?));
        }
        acc.push('\n');
    }
    if let Some(p) = lookup_path {
        acc.push_str(&sha256_hex(&fs::read(p)?));
    }
    Ok(sha256_hex(acc.as_bytes()))
}

/// Content hash of the config (paths excluded) and the corpus.
pub fn run_id(config: &ExperimentConfig, corpus_hash: &str) -> Result<String> {
    let mut snapshot = config.clone();
    snapshot.paths.manifest = PathBuf::new();
    snapshot.paths.workdir = PathBuf::new();
    snapshot.paths.deid_lookup = None;
    let text = format!("{}\n{corpus_hash}", serde_json::to_string(&snapshot)?);
    Ok(sha256_hex(text.as_bytes())[..16].to_string())
}

pub fn run_dir(config: &ExperimentConfig, run_id: &str) -> PathBuf {
    config.paths.workdir.join("runs").join(run_id)
}

fn lookup_path(config: &ExperimentConfig) -> Option<PathBuf> {
    if let Some(p) = &config.paths.deid_lookup {
        return Some(p.clone());
    }
    let beside = config.paths.manifest.parent().unwrap_or(Path::new(".")).join(LOOKUP_FILE);
    beside.exists().then_some(beside)
}

/// Runs one experiment, or returns the stored record of an identical
/// completed run. A failure is recorded in `run.json` before it is returned.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let entries = read_manifest(&config.paths.manifest).map_err(|e| e.in_stage("manifest"))?;
    let lookup_file = lookup_path(config);
    let hash = corpus_hash(&entries, lookup_file.as_deref()).map_err(|e| e.in_stage("manifest"))?;
    let id = run_id(config, &hash)?;
    let dir = run_dir(config, &id);
    if !opts.force {
        if let Ok(rec) = RunRecord::load(&dir) {
            if rec.is_completed() {
                log::info!("run {id} already complete; skipping");
                return Ok(rec);
            }
        }
    }
    fs::create_dir_all(&dir)?;
    let mut record = RunRecord {
        run_id: id.clone(),
        model: config.model.name(),
        status: RunStatus::Running,
        config: config.clone(),
        corpus_hash: hash,
        run_dir: dir.clone(),
        split_sizes: SplitSizes::default(),
        metrics: None,
        artifacts: BTreeMap::new(),
        started_at: now(),
        finished_at: None,
    };
    write_json(&dir.join(RUN_FILE), &record)?;
    let result = execute(config, opts, &entries, lookup_file.as_deref(), &mut record);
    record.finished_at = Some(now());
    match result {
        Ok(metrics) => {
            record.status = RunStatus::Completed;
            record.metrics = Some(metrics);
            write_json(&dir.join(RUN_FILE), &record)?;
            log::info!("run {id} complete");
            Ok(record)
        }
        Err(err) => {
            let (stage, cause) = match &err {
                Error::Stage { stage, source } => (stage.clone(), source.to_string()),
                other => ("run".to_string(), other.to_string()),
            };
            record.status = RunStatus::Failed { stage, cause };
            write_json(&dir.join(RUN_FILE), &record)?;
            Err(err)
        }
    }
}

struct Recorder<'a> {
    dir: &'a Path,
    record: &'a mut RunRecord,
}

impl Recorder<'_> {
    fn bytes(&mut self, name: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.record.artifacts.insert(
            name.to_string(),
            ArtifactRef {
                path: rel.into(),
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, rel, text.as_bytes())
    }
}

fn pick<'a>(corpus: &'a [ReportData], ids: &[String]) -> Vec<&'a ReportData> {
    let by_id: BTreeMap<&str, &ReportData> = corpus.iter().map(|r| (r.report_id.as_str(), r)).collect();
    ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect()
}

fn instances_of(reports: &[&ReportData]) -> Vec<Instance> {
    reports.iter().flat_map(|r| r.instances.iter().cloned()).collect()
}

fn instance_csv(instances: &[Instance]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_instances_csv(instances, &mut buf)?;
    Ok(buf)
}

fn execute(
    config: &ExperimentConfig,
    opts: &RunOptions,
    entries: &[ManifestEntry],
    lookup_file: Option<&Path>,
    record: &mut RunRecord,
) -> Result<EvalReport> {
    let dir = record.run_dir.clone();
    let lookup = match lookup_file {
        Some(p) => LookupTable::load(p).map_err(|e| e.in_stage("deid"))?,
        None => LookupTable::default(),
    };
    let ctx = StageContext {
        recipe: config.recipe,
        lookup: &lookup,
        policy: config.missing_lookup,
        engine: opts.engine.as_deref(),
        engine_tag: opts.engine_tag.clone(),
        cache_dir: Some(config.paths.workdir.join("cache")),
    };
    let corpus = prepare_corpus(entries, &ctx)?;

    let ids: Vec<String> = corpus.iter().map(|r| r.report_id.clone()).collect();
    let mut split = split_dataset(&ids, &config.split).map_err(|e| e.in_stage("split"))?;
    if let Some(k) = config.split.train_subset {
        split.train = training_subset(&split.train, k, config.split.seed, config.split.independent_subsets)
            .map_err(|e| e.in_stage("split"))?;
    }
    record.split_sizes = SplitSizes {
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
    };
    let mut rec = Recorder { dir: &dir, record };
    rec.json("split", "split.json", &split)?;

    let train_reports = pick(&corpus, &split.train);
    let val_reports = pick(&corpus, &split.val);
    let test_reports = pick(&corpus, &split.test);
    let test_instances = instances_of(&test_reports);
    for (name, reports) in [("train", &train_reports), ("val", &val_reports), ("test", &test_reports)] {
        let csv = instance_csv(&instances_of(reports))?;
        rec.bytes(&format!("instances_{name}"), &format!("instances/{name}.csv"), &csv)?;
    }

    let probs = match &config.model {
        ModelConfig::Classical { .. } => {
            fit_classical(config, &split, &train_reports, &val_reports, &test_instances, &mut rec)
                .map_err(|e| e.in_stage("train"))?
        }
        ModelConfig::Neural { .. } => {
            fit_neural(config, &train_reports, &val_reports, &test_instances, &mut rec).map_err(|e| e.in_stage("train"))?
        }
    };

    let scored = test_instances
        .into_iter()
        .zip(probs)
        .map(|(inst, p)| ScoredInstance::new(inst, p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("score"))?;
    let gold: Vec<GoldRecord> = test_reports.iter().map(|r| r.gold.clone()).collect();
    let report = evaluate(&scored, &gold, 0.95).map_err(|e| e.in_stage("evaluate"))?;

    rec.json("scores", SCORES_FILE, &scored)?;
    rec.json("eval", EVAL_FILE, &report)?;
    rec.bytes("eval_text", "eval.txt", report.to_text().as_bytes())?;
    for class in Label::ALL {
        let scores: Vec<f64> = scored.iter().map(|s| s.prob[class.index()]).collect();
        let labels: Vec<bool> = scored.iter().map(|s| s.gold() == class).collect();
        if let Ok(points) = roc_curve(&scores, &labels) {
            let mut buf = Vec::new();
            write_roc_csv(&points, &mut buf)?;
            rec.bytes(&format!("roc_{}", class.as_str()), &format!("roc_{}.csv", class.as_str()), &buf)?;
        }
    }
    Ok(report)
}

fn tokens_of(instances: &[Instance]) -> Vec<Vec<String>> {
    instances.iter().map(|i| tokenize_normalize(&i.segment)).collect()
}

fn fit_classical(
    config: &ExperimentConfig,
    split: &DatasetSplit,
    train_reports: &[&ReportData],
    val_reports: &[&ReportData],
    test_instances: &[Instance],
    rec: &mut Recorder<'_>,
) -> Result<Vec<[f64; 3]>> {
    let ModelConfig::Classical {
        spec,
        grid,
        standardize,
        folds,
    } = &config.model
    else {
        unreachable!("classical path");
    };
    // The classical models use the whole development set.
    let dev: Vec<Instance> = train_reports
        .iter()
        .chain(val_reports)
        .flat_map(|r| r.instances.iter().cloned())
        .collect();
    let dev_tokens = tokens_of(&dev);
    let vocab = fit_vocab(&dev_tokens, DEFAULT_VOCAB_CAP)?;
    let raw: Vec<FeatureVector> = dev
        .iter()
        .zip(&dev_tokens)
        .map(|(i, t)| vectorize_tokens(structured_features(i), t, &vocab))
        .collect();
    let scaler = if *standardize { fit_scaler(&raw)? } else { Scaler::identity() };
    let x: Vec<FeatureVector> = raw.iter().map(|v| apply_scaler(v, &scaler)).collect();
    let y: Vec<Label> = dev.iter().map(|i| i.label).collect();
    let seed = config.split.seed;
    let model = match grid {
        Some(g) if g.len() > 1 => {
            let groups: Vec<String> = dev.iter().map(|i| i.report_id.clone()).collect();
            let cv = cross_validate(g, &x, &y, &groups, *folds, seed)?;
            rec.json("cv", "cv.json", &(&cv.best, &cv.scores))?;
            cv.model
        }
        Some(g) => train(&g[0], &x, &y, seed)?,
        None => train(spec, &x, &y, seed)?,
    };
    rec.json("vocab", "vocab.json", &vocab)?;
    rec.json("scaler", "scaler.json", &scaler)?;
    let vocab_hash = rec.record.artifacts["vocab"].sha256.clone();
    let scaler_hash = standardize.then(|| rec.record.artifacts["scaler"].sha256.clone());
    rec.json(
        "model",
        "model.json",
        &ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            classifier: model.clone(),
            vocab_hash,
            scaler_hash,
        },
    )?;
    log::debug!("classical model trained on {} dev reports", split.train.len() + split.val.len());

    test_instances
        .iter()
        .map(|i| {
            let v = vectorize_tokens(structured_features(i), &tokenize_normalize(&i.segment), &vocab);
            model.predict_proba(&apply_scaler(&v, &scaler))
        })
        .collect()
}

fn structured_rows(instances: &[Instance], scaler: &Scaler) -> Array2<f64> {
    let mut out = Array2::zeros((instances.len(), STRUCTURED_DIM));
    for (r, inst) in instances.iter().enumerate() {
        let s = structured_features(inst);
        for j in 0..STRUCTURED_DIM {
            out[[r, j]] = if scaler.std[j] > 0.0 {
                (s[j] - scaler.mean[j]) / scaler.std[j]
            } else {
                s[j]
            };
        }
    }
    out
}

fn neural_dataset(instances: &[Instance], codec: &TokenCodec, scaler: &Scaler, max_len: usize) -> NeuralDataset {
    NeuralDataset {
        structured: structured_rows(instances, scaler),
        tokens: tokens_of(instances).iter().map(|t| codec.encode(t, max_len)).collect(),
        labels: instances.iter().map(|i| i.label.index()).collect(),
    }
}

fn fit_neural(
    config: &ExperimentConfig,
    train_reports: &[&ReportData],
    val_reports: &[&ReportData],
    test_instances: &[Instance],
    rec: &mut Recorder<'_>,
) -> Result<Vec<[f64; 3]>> {
    let ModelConfig::Neural { network, train } = &config.model else {
        unreachable!("neural path");
    };
    let train_inst = instances_of(train_reports);
    let val_inst = instances_of(val_reports);
    let train_tokens = tokens_of(&train_inst);
    let codec = TokenCodec::fit(&train_tokens)?;
    rec.json("codec", "codec.json", &codec)?;

    let embeddings = match &train.pretrain {
        Some(cbow) => {
            let corpus: Vec<Vec<usize>> = train_tokens.iter().map(|t| codec.ids(t)).collect();
            let out = pretrain_cbow(&corpus, codec.len(), cbow)?;
            let flat: Vec<f64> = out.embeddings.iter().copied().collect();
            let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
            rec.bytes("embeddings", "embeddings.bin", &bytes)?;
            Some(out.embeddings)
        }
        None => None,
    };

    let raw: Vec<FeatureVector> = train_inst
        .iter()
        .map(|i| FeatureVector {
            structured: structured_features(i),
            tfidf: Vec::new(),
            tfidf_dim: 0,
        })
        .collect();
    let scaler = fit_scaler(&raw)?;
    rec.json("scaler", "scaler.json", &scaler)?;

    let max_len = network.sequence_branch.max_len;
    let train_set = neural_dataset(&train_inst, &codec, &scaler, max_len);
    let val_set = neural_dataset(&val_inst, &codec, &scaler, max_len);
    let test_set = neural_dataset(test_instances, &codec, &scaler, max_len);

    let mut net = Network::new(network, codec.len(), embeddings, train.seed)?;
    let ck_dir = rec.dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    let latest = ck_dir.join("latest.json");
    let outcome = train_network_with(&mut net, train, &train_set, &val_set, |ck| ck.save(&latest))?;
    if outcome.diverged {
        log::warn!("training diverged; evaluating the best checkpoint");
    }
    outcome.best.save(&ck_dir.join("best.json"))?;
    rec.record.artifacts.insert(
        "checkpoint".into(),
        ArtifactRef {
            path: "checkpoints/best.bin".into(),
            sha256: outcome.best.blob_sha256.clone(),
        },
    );
    let mut loss = Vec::new();
    write_loss_csv(&outcome.history, &mut loss)?;
    rec.bytes("loss", "loss.csv", &loss)?;

    if test_set.is_empty() {
        return Ok(Vec::new());
    }
    net.predict_proba(&test_set.structured, &test_set.tokens)
}
