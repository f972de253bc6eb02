//! Experiment configuration: flat `key = value` lines, `#` comments.
//!
//! ```text
//! lr = 0.004
//! lr_emb = 0.001
//! embedding_dim = 50
//! shared.h = 6
//! shared.n_p = 10
//! shared.n_f = 40
//! tasks = implicit, explicit
//! main_task = implicit
//! task.implicit.labels = Comparison, Contingency, Expansion, Temporal
//! task.implicit.h = 5
//! task.implicit.train = data/implicit.train.jsonl
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Every problem found is reported in one [`Error::Config`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::LabelSet;
use crate::embedding::DEFAULT_INIT_SCALE;
use crate::error::{Error, Result};
use crate::features::{Template, DEFAULT_MIN_COUNT};
use crate::model::{SharedSpec, TaskSpec};
use crate::trainer::{TaskSelection, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EMB_LR, DEFAULT_LR};

/// Parsed `key = value` pairs in file order, later keys overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(source_name, n + 1, "expected `key = value`"));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(source_name, n + 1, "empty key"));
            }
            kv.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(kv)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("override {assignment:?} is not key=value")]))?;
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskConfig {
    pub spec: TaskSpec,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub shared: SharedSpec,
    pub tasks: Vec<TaskConfig>,
    pub embedding_dim: usize,
    pub embeddings: Option<PathBuf>,
    pub embedding_scale: f64,
    pub feature_min_count: usize,
    pub output_dir: PathBuf,
    /// The key/value snapshot the config was built from.
    pub resolved: KeyValues,
}

const TASK_KEYS: &[&str] = &[
    "labels", "labels_file", "h", "n_p", "n_f", "n_r", "mu", "mu_e", "features", "train", "dev", "test",
];

const TOP_KEYS: &[&str] = &[
    "lr", "lr_emb", "batch_size", "epochs", "task_selection", "task_sequence", "seed", "main_task",
    "workers", "embedding_dim", "embeddings", "embedding_scale", "feature_min_count", "shared.h",
    "shared.n_p", "shared.n_f", "tasks", "output_dir",
];

struct Reader<'a> {
    kv: &'a KeyValues,
    errs: Vec<String>,
}

impl Reader<'_> {
    fn parse<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Option<T> {
        match self.kv.get(key) {
            Some(v) => match v.parse() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.errs.push(format!("{key}: cannot parse {v:?}"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.errs.push(format!("{key}: missing"));
                }
                default
            }
        }
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.kv.get(key).map(split_list)
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut kv = KeyValues::parse(&text, &path.display().to_string())?;
        for o in overrides {
            kv.set(o)?;
        }
        Self::from_key_values(kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_key_values(kv: KeyValues, base_dir: &Path) -> Result<Self> {
        let mut r = Reader { kv: &kv, errs: Vec::new() };
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };

        for (k, _) in kv.iter() {
            let known = TOP_KEYS.contains(&k)
                || k.strip_prefix("task.")
                    .and_then(|rest| rest.rsplit_once('.'))
                    .is_some_and(|(_, field)| TASK_KEYS.contains(&field));
            if !known {
                r.errs.push(format!("unknown key {k:?}"));
            }
        }

        let task_names = r.list("tasks").unwrap_or_default();
        if task_names.is_empty() {
            r.errs.push("tasks: at least one task must be declared".into());
        }
        for (k, _) in kv.iter() {
            if let Some((name, _)) = k.strip_prefix("task.").and_then(|rest| rest.rsplit_once('.')) {
                if !task_names.iter().any(|t| t == name) {
                    r.errs.push(format!("{k}: task {name:?} is not listed in `tasks`"));
                }
            }
        }

        let mut tasks = Vec::new();
        for (pos, name) in task_names.iter().enumerate() {
            let key = |f: &str| format!("task.{name}.{f}");
            let labels = match (r.list(&key("labels")), kv.get(&key("labels_file"))) {
                (Some(l), None) => Some(l),
                (None, Some(f)) => match std::fs::read_to_string(resolve(f)) {
                    Ok(text) => Some(
                        text.lines()
                            .map(str::trim)
                            .filter(|l| !l.is_empty() && !l.starts_with('#'))
                            .map(String::from)
                            .collect(),
                    ),
                    Err(e) => {
                        r.errs.push(format!("{}: {f}: {e}", key("labels_file")));
                        None
                    }
                },
                (Some(_), Some(_)) => {
                    r.errs.push(format!("task {name}: give labels or labels_file, not both"));
                    None
                }
                (None, None) => {
                    r.errs.push(format!("{}: missing", key("labels")));
                    None
                }
            };
            let labels = labels.and_then(|l| match LabelSet::new(l) {
                Ok(ls) => Some(ls),
                Err(e) => {
                    r.errs.push(format!("task {name}: {e}"));
                    None
                }
            });
            let templates = match r.list(&key("features")) {
                Some(list) => list
                    .iter()
                    .filter(|s| s.as_str() != "none")
                    .filter_map(|s| match s.parse::<Template>() {
                        Ok(t) => Some(t),
                        Err(e) => {
                            r.errs.push(format!("{}: {e}", key("features")));
                            None
                        }
                    })
                    .collect(),
                None => Template::defaults_for_task(pos + 1),
            };
            let window = r.parse(&key("h"), None);
            let pool = r.parse(&key("n_p"), None);
            let filters = r.parse(&key("n_f"), None);
            let fusion = r.parse(&key("n_r"), None);
            let mu = r.parse(&key("mu"), Some(1.0));
            let mu_e = r.parse(&key("mu_e"), Some(1.0));
            let path = |f: &str| kv.get(&key(f)).map(resolve);
            if let (Some(labels), Some(window), Some(pool), Some(filters), Some(fusion_dim), Some(mu), Some(mu_e)) =
                (labels, window, pool, filters, fusion, mu, mu_e)
            {
                let spec = TaskSpec {
                    name: name.clone(),
                    labels,
                    window,
                    pool,
                    filters,
                    fusion_dim,
                    lr_ratio: mu,
                    emb_lr_ratio: mu_e,
                    templates,
                };
                r.errs.extend(spec.validate());
                tasks.push(TaskConfig {
                    spec,
                    train: path("train"),
                    dev: path("dev"),
                    test: path("test"),
                });
            }
        }

        let index_of = |n: &str| task_names.iter().position(|t| t == n);
        let main_task = match kv.get("main_task") {
            Some(n) => index_of(n).unwrap_or_else(|| {
                r.errs.push(format!("main_task: {n:?} is not a declared task"));
                0
            }),
            None => 0,
        };
        let task_selection = match kv.get("task_selection").unwrap_or("round_robin") {
            "round_robin" => TaskSelection::RoundRobin,
            "proportional" => TaskSelection::Proportional,
            "fixed_sequence" => {
                let seq = r.list("task_sequence").unwrap_or_default();
                if seq.is_empty() {
                    r.errs.push("task_sequence: required by fixed_sequence".into());
                }
                TaskSelection::FixedSequence(
                    seq.iter()
                        .filter_map(|n| {
                            let i = index_of(n);
                            if i.is_none() {
                                r.errs.push(format!("task_sequence: unknown task {n:?}"));
                            }
                            i
                        })
                        .collect(),
                )
            }
            other => {
                r.errs.push(format!("task_selection: unknown policy {other:?}"));
                TaskSelection::RoundRobin
            }
        };

        let train = TrainConfig {
            lr: r.parse("lr", Some(DEFAULT_LR)).unwrap_or(DEFAULT_LR),
            lr_emb: r.parse("lr_emb", Some(DEFAULT_EMB_LR)).unwrap_or(DEFAULT_EMB_LR),
            batch_size: r.parse("batch_size", Some(DEFAULT_BATCH_SIZE)).unwrap_or(1),
            epochs: r.parse("epochs", Some(10)).unwrap_or(0),
            task_selection,
            seed: r.parse("seed", Some(0)).unwrap_or(0),
            main_task,
            workers: r.parse("workers", Some(1)).unwrap_or(1),
        };
        if !task_names.is_empty() {
            r.errs.extend(train.validate(task_names.len()));
        }
        let shared = SharedSpec {
            window: r.parse("shared.h", None).unwrap_or(0),
            pool: r.parse("shared.n_p", None).unwrap_or(0),
            filters: r.parse("shared.n_f", None).unwrap_or(0),
        };
        for (k, v) in [("shared.h", shared.window), ("shared.n_p", shared.pool), ("shared.n_f", shared.filters)] {
            if v == 0 && kv.get(k).is_some() {
                r.errs.push(format!("{k}: must be positive"));
            }
        }
        let embedding_dim = r.parse("embedding_dim", Some(50)).unwrap_or(0);
        if embedding_dim == 0 {
            r.errs.push("embedding_dim: must be positive".into());
        }
        let embedding_scale = r.parse("embedding_scale", Some(DEFAULT_INIT_SCALE)).unwrap_or(DEFAULT_INIT_SCALE);
        if !embedding_scale.is_finite() || embedding_scale <= 0.0 {
            r.errs.push("embedding_scale: must be > 0".into());
        }
        let feature_min_count = r.parse("feature_min_count", Some(DEFAULT_MIN_COUNT)).unwrap_or(DEFAULT_MIN_COUNT);
        let embeddings = kv.get("embeddings").map(resolve);
        let output_dir = resolve(kv.get("output_dir").unwrap_or("run"));

        if !r.errs.is_empty() {
            return Err(Error::Config(r.errs));
        }
        Ok(ExperimentConfig {
            train,
            shared,
            tasks,
            embedding_dim,
            embeddings,
            embedding_scale,
            feature_min_count,
            output_dir,
            resolved: kv,
        })
    }

    /// Checks the files training needs: every task's train split and the
    /// main task's dev split must exist.
    pub fn validate_for_training(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let name = &t.spec.name;
            match &t.train {
                None => errs.push(format!("task.{name}.train: missing")),
                Some(p) if !p.is_file() => errs.push(format!("task.{name}.train: {} does not exist", p.display())),
                _ => {}
            }
            if i == self.train.main_task {
                match &t.dev {
                    None => errs.push(format!("task.{name}.dev: the main task needs a dev file")),
                    Some(p) if !p.is_file() => errs.push(format!("task.{name}.dev: {} does not exist", p.display())),
                    _ => {}
                }
            }
        }
        if let Some(p) = &self.embeddings {
            if !p.is_file() {
                errs.push(format!("embeddings: {} does not exist", p.display()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        tasks = a, b
        shared.h = 2
        shared.n_p = 2
        shared.n_f = 3   # trailing comment
        task.a.labels = x, y
        task.a.h = 2
        task.a.n_p = 2
        task.a.n_f = 2
        task.a.n_r = 4
        task.b.labels = p, q, r
        task.b.h = 3
        task.b.n_p = 2
        task.b.n_f = 2
        task.b.n_r = 4
        task.b.mu = 2.0
        task.b.mu_e = 0.2
        main_task = b
    ";

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_key_values(KeyValues::parse(text, "mem")?, Path::new("/base"))
    }

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.tasks.len(), 2);
        assert_eq!(c.train.main_task, 1);
        assert_eq!(c.train.lr, 0.004);
        assert_eq!(c.tasks[1].spec.emb_lr_ratio, 0.2);
        assert_eq!(c.tasks[0].spec.templates, Template::defaults_for_task(1));
        assert_eq!(c.output_dir, Path::new("/base/run"));
    }

    #[test]
    fn all_errors_reported_together() {
        let text = format!("{MINIMAL}\nlr = -1\nbogus = 3\ntask.a.h = x\ntask.c.h = 2\nbatch_size = 0");
        match parse(&text).unwrap_err() {
            Error::Config(errs) => {
                assert!(errs.len() >= 5, "{errs:?}");
                assert!(errs.iter().any(|e| e.contains("bogus")));
                assert!(errs.iter().any(|e| e.contains("task.a.h")));
                assert!(errs.iter().any(|e| e.contains("task.c.h")));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn overrides_and_fixed_sequence() {
        let mut kv = KeyValues::parse(MINIMAL, "mem").unwrap();
        kv.set("task_selection=fixed_sequence").unwrap();
        kv.set("task_sequence = b, b, a").unwrap();
        kv.set("task.a.features = none").unwrap();
        let c = ExperimentConfig::from_key_values(kv, Path::new(".")).unwrap();
        assert_eq!(c.train.task_selection, TaskSelection::FixedSequence(vec![1, 1, 0]));
        assert!(c.tasks[0].spec.templates.is_empty());
    }

    #[test]
    fn missing_dev_for_main_task() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("b.jsonl"), "").unwrap();
        let text = format!("{MINIMAL}\ntask.a.train = a.jsonl\ntask.b.train = b.jsonl\ntask.a.dev = a.jsonl");
        let c = ExperimentConfig::from_key_values(KeyValues::parse(&text, "mem").unwrap(), dir.path()).unwrap();
        match c.validate_for_training().unwrap_err() {
            Error::Config(errs) => assert_eq!(errs, vec!["task.b.dev: the main task needs a dev file"]),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(KeyValues::parse("a = 1\nnonsense\n", "f"), Err(Error::Parse { line: 2, .. })));
    }
}
