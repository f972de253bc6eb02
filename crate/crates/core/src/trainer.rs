//! Multi-task mini-batch SGD.
//!
//! Each epoch picks one task and makes a full shuffled pass over its
//! training set. A batch `B` updates
//!
//! ```text
//! Θ   ← Θ   − μ_t  · λ   · (1/|B|) Σ ∂J/∂Θ
//! Θ_e ← Θ_e − μ_et · λ_e · (1/|B|) Σ ∂J/∂Θ_e
//! ```
//!
//! so each task has its own effective learning rates on the network and on
//! the embeddings. After each epoch the main task is scored on its dev set
//! and the best macro-F1 state is kept.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{score, MetricsReport};
use crate::model::{loss, Example, Gradients, ModelState, ParamBlock};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LR: f64 = 0.004;
pub const DEFAULT_EMB_LR: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSelection {
    /// Tasks in declaration order, cycling.
    RoundRobin,
    /// Random task with probability proportional to its training-set size.
    Proportional,
    /// Task indices read from a list, cycling when it runs out.
    FixedSequence(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Network learning rate `λ`.
    pub lr: f64,
    /// Embedding learning rate `λ_e`.
    pub lr_emb: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub task_selection: TaskSelection,
    pub seed: u64,
    pub main_task: usize,
    /// Threads for per-example gradients; results are reduced in input order.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            lr_emb: DEFAULT_EMB_LR,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 1,
            task_selection: TaskSelection::RoundRobin,
            seed: 0,
            main_task: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_tasks: usize) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push("lr must be > 0".into());
        }
        if !(self.lr_emb > 0.0 && self.lr_emb.is_finite()) {
            errs.push("lr_emb must be > 0".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if self.main_task >= num_tasks {
            errs.push(format!("main task index {} is not registered", self.main_task));
        }
        if let TaskSelection::FixedSequence(seq) = &self.task_selection {
            if seq.is_empty() {
                errs.push("fixed_sequence task list is empty".into());
            }
            if let Some(bad) = seq.iter().find(|&&t| t >= num_tasks) {
                errs.push(format!("fixed_sequence refers to unknown task index {bad}"));
            }
        }
        errs
    }
}

/// Training and dev data of one task, already mapped through the model.
#[derive(Clone, Debug, Default)]
pub struct TaskData {
    pub train: Vec<Example>,
    pub dev: Option<Vec<Example>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub task: usize,
    pub task_name: String,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_macro_f1: Option<f64>,
}

fn epoch_rng(seed: u64, epoch: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch as u64 + purpose);
    rng
}

/// Task trained in `epoch`. `sizes` holds the training-set size of each task.
pub fn select_task(epoch: usize, policy: &TaskSelection, sizes: &[usize], seed: u64) -> Result<usize> {
    if sizes.is_empty() {
        return Err(Error::Config(vec!["no tasks to select from".into()]));
    }
    match policy {
        TaskSelection::RoundRobin => Ok(epoch % sizes.len()),
        TaskSelection::Proportional => {
            let dist = WeightedIndex::new(sizes)
                .map_err(|e| Error::Config(vec![format!("proportional selection: {e}")]))?;
            Ok(dist.sample(&mut epoch_rng(seed, epoch, 0)))
        }
        TaskSelection::FixedSequence(seq) => {
            if seq.is_empty() {
                return Err(Error::Config(vec!["fixed_sequence task list is empty".into()]));
            }
            let t = seq[epoch % seq.len()];
            if t >= sizes.len() {
                return Err(Error::Config(vec![format!("unknown task index {t}")]));
            }
            Ok(t)
        }
    }
}

fn example_gradients(state: &ModelState, task: usize, ex: &Example) -> Result<(f64, Gradients)> {
    let (probs, cache) = state.forward_input(task, &ex.input)?;
    let l = loss(&probs, ex.label)?;
    Ok((l, state.backward(task, &cache, ex.label)?))
}

/// Summed loss and gradient of a batch; per-example results are combined
/// in batch order whatever the thread count.
pub fn batch_gradients(
    state: &ModelState,
    task: usize,
    batch: &[&Example],
    workers: usize,
) -> Result<(f64, Gradients)> {
    let per_example: Vec<Result<(f64, Gradients)>> = if workers > 1 {
        batch
            .par_iter()
            .map(|ex| example_gradients(state, task, ex))
            .collect()
    } else {
        batch.iter().map(|ex| example_gradients(state, task, ex)).collect()
    };
    let mut total = Gradients::zeros(state, task);
    let mut loss_sum = 0.0;
    for r in per_example {
        let (l, g) = r?;
        loss_sum += l;
        total.add_assign(&g);
    }
    Ok((loss_sum, total))
}

/// One shuffled pass over `data` for `task`. Returns the log entry without
/// dev metrics.
pub fn train_epoch(
    state: &mut ModelState,
    task: usize,
    data: &[Example],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochLog> {
    let spec = &state.tasks[task].spec;
    let (mu, mu_e, name) = (spec.lr_ratio, spec.emb_lr_ratio, spec.name.clone());
    let mut order: Vec<&Example> = data.iter().collect();
    order.shuffle(&mut epoch_rng(cfg.seed, epoch, 1));

    let run = |state: &mut ModelState| -> Result<f64> {
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let (l, g) = batch_gradients(state, task, batch, cfg.workers)?;
            if !l.is_finite() {
                return Err(Error::NonFinite { what: "loss", epoch, batch: b });
            }
            if !g.network_is_finite() || !g.embeddings_are_finite() {
                return Err(Error::NonFinite { what: "gradient", epoch, batch: b });
            }
            let n = batch.len() as f64;
            state.apply_gradients(&g, mu * cfg.lr / n, mu_e * cfg.lr_emb / n);
            loss_sum += l;
        }
        Ok(loss_sum)
    };
    let loss_sum = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(vec![format!("thread pool: {e}")]))?;
        pool.install(|| run(state))?
    } else {
        run(state)?
    };
    Ok(EpochLog {
        epoch,
        task,
        task_name: name,
        mean_loss: if data.is_empty() { 0.0 } else { loss_sum / data.len() as f64 },
        dev_accuracy: None,
        dev_macro_f1: None,
    })
}

/// Predictions of `task` on `examples`, scored against their labels.
pub fn evaluate(state: &ModelState, task: usize, examples: &[Example]) -> Result<MetricsReport> {
    let pred = examples
        .iter()
        .map(|e| state.predict_input(task, &e.input))
        .collect::<Result<Vec<usize>>>()?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    score(&gold, &pred, state.tasks[task].spec.num_classes())
}

/// Mean loss of `task` over `examples`.
pub fn mean_loss(state: &ModelState, task: usize, examples: &[Example]) -> Result<f64> {
    let mut s = 0.0;
    for e in examples {
        s += loss(&state.forward_input(task, &e.input)?.0, e.label)?;
    }
    Ok(s / examples.len().max(1) as f64)
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub state: ModelState,
    /// State after the epoch with the best main-task dev macro-F1
    /// (the initial state if no epoch ran).
    pub best: ModelState,
    pub best_epoch: Option<usize>,
    pub best_dev: Option<MetricsReport>,
    pub log: Vec<EpochLog>,
}

/// Trains for `cfg.epochs` epochs. `data[t]` belongs to task `t`.
pub fn fit(state: ModelState, data: &[TaskData], cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with(state, data, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    mut state: ModelState,
    data: &[TaskData],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome> {
    let mut errs = cfg.validate(state.tasks.len());
    if data.len() != state.tasks.len() {
        errs.push(format!("{} datasets for {} tasks", data.len(), state.tasks.len()));
    }
    let dev = data.get(cfg.main_task).and_then(|d| d.dev.as_ref());
    if dev.is_none() {
        errs.push("the main task has no dev split".into());
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let dev = dev.expect("checked");
    let sizes: Vec<usize> = data.iter().map(|d| d.train.len()).collect();

    let mut best = state.clone();
    let mut best_epoch = None;
    let mut best_dev: Option<MetricsReport> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let task = select_task(epoch, &cfg.task_selection, &sizes, cfg.seed)?;
        let mut entry = train_epoch(&mut state, task, &data[task].train, cfg, epoch)?;
        let report = evaluate(&state, cfg.main_task, dev)?;
        entry.dev_accuracy = Some(report.accuracy);
        entry.dev_macro_f1 = Some(report.macro_f1);
        log::info!(
            "epoch {epoch} task {} loss {:.5} dev macro-F1 {:.4}",
            entry.task_name,
            entry.mean_loss,
            report.macro_f1
        );
        if best_dev.as_ref().is_none_or(|b| report.macro_f1 > b.macro_f1) {
            best = state.clone();
            best_epoch = Some(epoch);
            best_dev = Some(report);
        }
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(FitOutcome {
        state,
        best,
        best_epoch,
        best_dev,
        log,
    })
}

/// Denominator floor for relative gradient errors.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;
pub const DEFAULT_GRAD_CHECK_STEP: f64 = 1e-5;
pub const DEFAULT_GRAD_CHECK_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn to_table(&self) -> String {
        let w = self.blocks.iter().map(|b| b.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<w$}  {:>6}  {:>12}  {:>12}\n", "block", "coords", "max rel err", "max abs err");
        for b in &self.blocks {
            s.push_str(&format!(
                "{:<w$}  {:>6}  {:>12.3e}  {:>12.3e}\n",
                b.name, b.coordinates, b.max_rel_error, b.max_abs_error
            ));
        }
        s.push_str(&format!(
            "max relative error {:.3e} (tolerance {:.1e}): {}\n",
            self.max_rel_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        ));
        s
    }
}

/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares backprop gradients for one example against central differences
/// on every coordinate of every parameter block (the frozen `<pad>` row
/// excluded). `corrupt` scales the analytic gradient by 1.5 to exercise the
/// checker itself.
pub fn grad_check(
    state: &ModelState,
    task: usize,
    example: &Example,
    step: f64,
    tol: f64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let (_, cache) = state.forward_input(task, &example.input)?;
    let grads = state.backward(task, &cache, example.label)?;
    let mut probe = state.clone();
    let dim = state.embeddings.dim();
    let mut blocks = Vec::new();
    for block in state.blocks() {
        let analytic = grads.block(state, block);
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut coords = 0;
        for (i, &g) in analytic.iter().enumerate() {
            if block == ParamBlock::Embeddings && !state.embeddings.is_trainable(i / dim) {
                continue;
            }
            let orig = probe.block(block)[i];
            probe.block_mut(block)[i] = orig + step;
            let plus = loss(&probe.forward_input(task, &example.input)?.0, example.label)?;
            probe.block_mut(block)[i] = orig - step;
            let minus = loss(&probe.forward_input(task, &example.input)?.0, example.label)?;
            probe.block_mut(block)[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = if corrupt { 1.5 * g } else { g };
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
            coords += 1;
        }
        blocks.push(BlockCheck {
            name: block.name(state),
            coordinates: coords,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_cycles() {
        let got: Vec<usize> = (0..8)
            .map(|e| select_task(e, &TaskSelection::RoundRobin, &[1, 1, 1, 1], 0).unwrap())
            .collect();
        assert_eq!(got, [0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn single_task_always_selected() {
        for policy in [TaskSelection::RoundRobin, TaskSelection::Proportional, TaskSelection::FixedSequence(vec![0])] {
            for e in 0..10 {
                assert_eq!(select_task(e, &policy, &[7], 3).unwrap(), 0);
            }
        }
    }

    #[test]
    fn fixed_sequence_and_errors() {
        let p = TaskSelection::FixedSequence(vec![2, 0]);
        let got: Vec<usize> = (0..4).map(|e| select_task(e, &p, &[1, 1, 1], 0).unwrap()).collect();
        assert_eq!(got, [2, 0, 2, 0]);
        assert!(matches!(select_task(0, &TaskSelection::RoundRobin, &[], 0), Err(Error::Config(_))));
        assert!(select_task(0, &TaskSelection::FixedSequence(vec![5]), &[1], 0).is_err());
    }

    #[test]
    fn proportional_frequencies_follow_sizes() {
        let sizes = [12345usize, 17469, 19681, 40000];
        let total: usize = sizes.iter().sum();
        let mut counts = [0usize; 4];
        for e in 0..10_000 {
            counts[select_task(e, &TaskSelection::Proportional, &sizes, 17).unwrap()] += 1;
        }
        for (c, s) in counts.iter().zip(sizes) {
            let freq = *c as f64 / 10_000.0;
            let want = s as f64 / total as f64;
            assert!((freq - want).abs() < 0.02, "{freq} vs {want}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn config_validation_lists_everything() {
        let cfg = TrainConfig {
            lr: 0.0,
            batch_size: 0,
            main_task: 4,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.validate(2).len(), 3);
    }
}
