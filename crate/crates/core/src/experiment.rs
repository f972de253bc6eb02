//! End-to-end workflows behind the `dmtl` commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use crate::config::ExperimentConfig;
use crate::corpus::{
    extract_connective_pairs, load_connectives, load_dataset, sample_corpus, save_dataset, ArgumentPair,
    ExtractionRuleSet, ExtractionStats, SentenceSplitter,
};
use crate::embedding::{load_pretrained, random_init, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{binarize, score, MetricsReport};
use crate::features::{fit_templates, FeatureTemplateSet};
use crate::model::{Example, ModelState};
use crate::trainer::{fit_with, EpochLog, FitOutcome, TaskData};

#[derive(Clone, Debug, Default)]
pub struct TaskCorpus {
    pub train: Vec<ArgumentPair>,
    pub dev: Option<Vec<ArgumentPair>>,
    pub test: Option<Vec<ArgumentPair>>,
}

/// Loads every split the config names, validating labels.
pub fn load_corpora(cfg: &ExperimentConfig) -> Result<Vec<TaskCorpus>> {
    cfg.tasks
        .iter()
        .map(|t| {
            let load = |p: &Option<PathBuf>| -> Result<Option<Vec<ArgumentPair>>> {
                p.as_deref()
                    .map(|p| load_dataset(p, &t.spec.name, &t.spec.labels).map(|d| d.pairs))
                    .transpose()
            };
            Ok(TaskCorpus {
                train: load(&t.train)?.unwrap_or_default(),
                dev: load(&t.dev)?,
                test: load(&t.test)?,
            })
        })
        .collect()
}

/// Vocabulary and embeddings for the training data: pretrained vectors when
/// configured (training tokens missing from the file are added with random
/// vectors), otherwise random vectors for every training token.
pub fn build_embeddings(cfg: &ExperimentConfig, corpora: &[TaskCorpus]) -> Result<(Vocabulary, EmbeddingTable)> {
    let train_tokens = corpora
        .iter()
        .flat_map(|c| c.train.iter())
        .flat_map(|p| p.arg1.iter().chain(&p.arg2));
    match &cfg.embeddings {
        None => {
            let vocab = Vocabulary::from_tokens(train_tokens.map(String::as_str));
            let table = random_init(&vocab, cfg.embedding_dim, cfg.embedding_scale, cfg.train.seed);
            Ok((vocab, table))
        }
        Some(path) => {
            let (mut vocab, table) = load_pretrained(path, cfg.embedding_dim)?;
            let known = vocab.len();
            for t in train_tokens {
                vocab.insert(t);
            }
            let fresh = random_init(&vocab, cfg.embedding_dim, cfg.embedding_scale, cfg.train.seed);
            let mut rows = table.matrix().as_slice().to_vec();
            rows.extend_from_slice(&fresh.matrix().as_slice()[known * cfg.embedding_dim..]);
            let m = crate::tensor::Mat2::from_vec(vocab.len(), cfg.embedding_dim, rows)?;
            Ok((vocab, EmbeddingTable::from_matrix(m)?))
        }
    }
}

/// Builds the initial model: embeddings, fitted feature templates, random weights.
pub fn build_model(cfg: &ExperimentConfig, corpora: &[TaskCorpus]) -> Result<ModelState> {
    let (vocab, table) = build_embeddings(cfg, corpora)?;
    let tasks = cfg
        .tasks
        .iter()
        .zip(corpora)
        .map(|(t, c)| {
            let spec = FeatureTemplateSet::new(t.spec.name.clone(), t.spec.templates.iter().copied());
            (t.spec.clone(), fit_templates(&c.train, &spec, cfg.feature_min_count))
        })
        .collect();
    ModelState::new(vocab, table, cfg.shared, tasks, cfg.train.seed)
}

pub fn prepare_all(state: &ModelState, task: usize, pairs: &[ArgumentPair]) -> Result<Vec<Example>> {
    pairs.iter().map(|p| state.prepare(task, p)).collect()
}

pub fn prepare_data(state: &ModelState, corpora: &[TaskCorpus]) -> Result<Vec<TaskData>> {
    corpora
        .iter()
        .enumerate()
        .map(|(t, c)| {
            Ok(TaskData {
                train: prepare_all(state, t, &c.train)?,
                dev: c.dev.as_deref().map(|d| prepare_all(state, t, d)).transpose()?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: PathBuf,
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub epoch_log: PathBuf,
    pub dev_report: PathBuf,
}

pub struct TrainRun {
    pub manifest: RunManifest,
    pub outcome: FitOutcome,
}

/// Validates, writes the manifest, trains, then writes checkpoints, the
/// epoch log and the dev report of the selected model.
pub fn train_from_config(cfg: &ExperimentConfig, config_path: &Path) -> Result<TrainRun> {
    cfg.validate_for_training()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: config_path.to_path_buf(),
        config: cfg.resolved.iter().map(|(k, v)| (k.into(), v.into())).collect(),
        seed: cfg.train.seed,
        checkpoint: out.join("best.ckpt.json"),
        final_checkpoint: out.join("final.ckpt.json"),
        epoch_log: out.join("epochs.jsonl"),
        dev_report: out.join("dev_report.json"),
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let corpora = load_corpora(cfg)?;
    let state = build_model(cfg, &corpora)?;
    let data = prepare_data(&state, &corpora)?;

    let log_path = &manifest.epoch_log;
    let mut log_file = BufWriter::new(File::create(log_path).map_err(|e| Error::io(log_path, e))?);
    let mut write_err: Option<std::io::Error> = None;
    let outcome = fit_with(state, &data, &cfg.train, |entry: &EpochLog| {
        let line = serde_json::to_string(entry).expect("plain struct");
        if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(log_path, e));
    }
    outcome.best.save_checkpoint(&manifest.checkpoint)?;
    outcome.state.save_checkpoint(&manifest.final_checkpoint)?;
    if let Some(report) = &outcome.best_dev {
        let names = cfg.tasks[cfg.train.main_task].spec.labels.names();
        write_json(&manifest.dev_report, &report.to_json(names))?;
    }
    Ok(TrainRun { manifest, outcome })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalMode {
    FourWay,
    /// One-vs-other for the named class.
    Binary(String),
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four_way" | "multi" => Ok(EvalMode::FourWay),
            _ => match s.strip_prefix("binary:") {
                Some(c) if !c.is_empty() => Ok(EvalMode::Binary(c.to_string())),
                _ => Err(Error::Rejected(format!("unknown mode {s:?}; use four_way or binary:<class>"))),
            },
        }
    }
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    pub class_names: Vec<String>,
}

/// Scores `state` on `pairs`, all of which must belong to `task`.
pub fn evaluate_pairs(state: &ModelState, task: &str, pairs: &[ArgumentPair], mode: &EvalMode) -> Result<EvalOutcome> {
    if pairs.is_empty() {
        return Err(Error::Rejected("cannot evaluate an empty dataset".into()));
    }
    let t = state.task_index(task)?;
    let labels = &state.tasks[t].spec.labels;
    let examples = prepare_all(state, t, pairs)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let pred = examples
        .iter()
        .map(|e| state.predict_input(t, &e.input))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        EvalMode::FourWay => Ok(EvalOutcome {
            report: score(&gold, &pred, labels.len())?,
            class_names: labels.names().to_vec(),
        }),
        EvalMode::Binary(class) => {
            let pos = labels
                .index(class)
                .ok_or_else(|| Error::Rejected(format!("class {class:?} is not a label of task {task:?}")))?;
            let (g, p) = binarize(&gold, &pred, pos);
            Ok(EvalOutcome {
                report: score(&g, &p, 2)?,
                class_names: vec![format!("Other"), class.clone()],
            })
        }
    }
}

/// Raw-text files under `root` (or `root` itself), sorted by path.
pub fn raw_documents(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

pub struct ExtractOutput {
    pub extracted: usize,
    pub sample: Vec<ArgumentPair>,
    pub stats: ExtractionStats,
}

pub struct ExtractRequest<'a> {
    pub raw: &'a Path,
    pub connectives: &'a Path,
    pub rules: ExtractionRuleSet,
    pub splitter: SentenceSplitter,
    pub task: &'a str,
    pub n: Option<usize>,
    pub seed: u64,
}

/// Splits, mines and samples; nothing is written.
pub fn extract_corpus(req: &ExtractRequest) -> Result<ExtractOutput> {
    req.rules.validate()?;
    let patterns = load_connectives(req.connectives)?;
    if patterns.is_empty() {
        return Err(Error::Rejected(format!("{}: no connectives", req.connectives.display())));
    }
    let mut pairs = Vec::new();
    for doc in raw_documents(req.raw)? {
        let text = fs::read_to_string(&doc).map_err(|e| Error::io(&doc, e))?;
        let source = doc
            .strip_prefix(req.raw)
            .ok()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new(doc.file_name().unwrap_or_default()))
            .to_string_lossy()
            .replace('\\', "/");
        let sentences = req.splitter.split(&text);
        pairs.extend(extract_connective_pairs(&source, &sentences, &patterns, &req.rules, req.task));
    }
    let extracted = pairs.len();
    let sample = sample_corpus(&pairs, req.n.unwrap_or(extracted), req.seed)?;
    let stats = ExtractionStats::from_pairs(&sample);
    Ok(ExtractOutput { extracted, sample, stats })
}

/// [`extract_corpus`], then writes the dataset, `<out>.stats.txt` and `<out>.stats.json`.
pub fn extract_to_files(req: &ExtractRequest, out: &Path) -> Result<ExtractOutput> {
    let res = extract_corpus(req)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_dataset(out, &res.sample)?;
    let stats_txt = with_suffix(out, ".stats.txt");
    fs::write(&stats_txt, res.stats.to_table()).map_err(|e| Error::io(&stats_txt, e))?;
    write_json(&with_suffix(out, ".stats.json"), &res.stats)?;
    Ok(res)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_modes_parse() {
        assert_eq!("four_way".parse::<EvalMode>().unwrap(), EvalMode::FourWay);
        assert_eq!(
            "binary:Expansion".parse::<EvalMode>().unwrap(),
            EvalMode::Binary("Expansion".into())
        );
        assert!("binary:".parse::<EvalMode>().is_err());
        assert!("three".parse::<EvalMode>().is_err());
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("out/d.jsonl"), ".stats.txt"), Path::new("out/d.jsonl.stats.txt"));
    }
}
