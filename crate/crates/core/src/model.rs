//! The multi-task network.
//!
//! For task `t` and pair `s`:
//!
//! ```text
//! p_t = NN_t(s)                      private encoder of task t
//! p_s = NN(s)                        encoder shared by all tasks
//! q_t = tanh(W1_t [p_t; p_s] + b1_t)
//! r_t = [q_t; sf_t]                  surface features appended raw
//! l_t = softmax(W2_t r_t + b2_t)
//! J   = -log l_t[gold]
//! ```
//!
//! Parameters are the shared encoder, one private encoder and head per task,
//! and the embedding table. Gradients of a task never touch another task's
//! private encoder or head.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_pair, ArgumentPair, LabelSet};
use crate::embedding::{EmbeddingTable, SparseRows, Vocabulary, PAD, PAD_TOKEN};
use crate::encoder::{self, add_into, EncoderCache, EncoderGrads, EncoderParams};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureTemplateSet, SurfaceVector, Template};
use crate::tensor::{matvec, softmax, Mat2, Vec1};

/// Probability floor applied before taking the log in [`loss`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Hyperparameters of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub labels: LabelSet,
    /// Window size `h` of the private encoder.
    pub window: usize,
    /// Pooling grid side `n_p`.
    pub pool: usize,
    /// Filter count `n_f`.
    pub filters: usize,
    /// Width `n_r` of the fused representation `q`.
    pub fusion_dim: usize,
    /// Regulative ratio `μ` on the network learning rate.
    pub lr_ratio: f64,
    /// Regulative ratio `μ_e` on the embedding learning rate.
    pub emb_lr_ratio: f64,
    pub templates: Vec<Template>,
}

impl TaskSpec {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let n = &self.name;
        if self.labels.len() < 2 {
            errs.push(format!("task {n}: needs at least 2 labels"));
        }
        for (key, v) in [("h", self.window), ("n_p", self.pool), ("n_f", self.filters), ("n_r", self.fusion_dim)] {
            if v == 0 {
                errs.push(format!("task {n}: {key} must be positive"));
            }
        }
        if !(self.lr_ratio > 0.0 && self.lr_ratio.is_finite()) {
            errs.push(format!("task {n}: mu must be > 0"));
        }
        if !(self.emb_lr_ratio >= 0.0 && self.emb_lr_ratio.is_finite()) {
            errs.push(format!("task {n}: mu_e must be >= 0"));
        }
        errs
    }

    /// `n_p · n_p · n_f`.
    pub fn private_output_len(&self) -> usize {
        self.pool * self.pool * self.filters
    }
}

/// Settings of the shared encoder `(h^s, n^s_p, n^s_f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedSpec {
    pub window: usize,
    pub pool: usize,
    pub filters: usize,
}

impl SharedSpec {
    pub fn output_len(&self) -> usize {
        self.pool * self.pool * self.filters
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskHeadParams {
    pub w1: Mat2,
    pub b1: Vec1,
    pub w2: Mat2,
    pub b2: Vec1,
}

impl TaskHeadParams {
    pub fn zeros(encoded_len: usize, fusion_dim: usize, feature_dim: usize, classes: usize) -> Self {
        TaskHeadParams {
            w1: Mat2::zeros(fusion_dim, encoded_len),
            b1: Vec1::zeros(fusion_dim),
            w2: Mat2::zeros(classes, fusion_dim + feature_dim),
            b2: Vec1::zeros(classes),
        }
    }

    fn init_uniform(
        encoded_len: usize,
        fusion_dim: usize,
        feature_dim: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut h = Self::zeros(encoded_len, fusion_dim, feature_dim, classes);
        for m in [&mut h.w1, &mut h.w2] {
            let r = (6.0 / (m.cols() as f64 + 1.0)).sqrt();
            for w in m.as_mut_slice() {
                *w = rng.gen_range(-r..=r);
            }
        }
        h
    }

    fn add_assign(&mut self, o: &TaskHeadParams) {
        add_into(self.w1.as_mut_slice(), o.w1.as_slice());
        add_into(self.b1.as_mut_slice(), o.b1.as_slice());
        add_into(self.w2.as_mut_slice(), o.w2.as_slice());
        add_into(self.b2.as_mut_slice(), o.b2.as_slice());
    }

    fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.b1.is_finite() && self.w2.is_finite() && self.b2.is_finite()
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub spec: TaskSpec,
    pub features: FeatureTemplateSet,
    pub encoder: EncoderParams,
    pub head: TaskHeadParams,
}

/// All parameters of the network plus the vocabulary they index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub shared_spec: SharedSpec,
    pub shared: EncoderParams,
    pub tasks: Vec<TaskState>,
    /// Number of parameter updates applied so far.
    updates: u64,
}

/// A pair mapped to token ids and surface features for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub ids1: Vec<usize>,
    pub ids2: Vec<usize>,
    pub features: SurfaceVector,
}

/// An [`Input`] with its gold label index.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Input,
    pub label: usize,
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    task: usize,
    version: u64,
    private: EncoderCache,
    shared: EncoderCache,
    /// `[p_t; p_s]`
    encoded: Vec1,
    q: Vec1,
    r: Vec1,
    probs: Vec1,
}

impl ForwardCache {
    pub fn probs(&self) -> &Vec1 {
        &self.probs
    }

    pub fn fused(&self) -> &Vec1 {
        &self.q
    }

    pub fn task(&self) -> usize {
        self.task
    }
}

/// Gradients of one task's loss. Other tasks' private parameters are absent,
/// which is the same as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub task: usize,
    pub shared: EncoderGrads,
    pub private: EncoderGrads,
    pub head: TaskHeadParams,
    pub embeddings: SparseRows,
}

impl Gradients {
    pub fn zeros(state: &ModelState, task: usize) -> Self {
        let t = &state.tasks[task];
        Gradients {
            task,
            shared: EncoderGrads::zeros_like(&state.shared),
            private: EncoderGrads::zeros_like(&t.encoder),
            head: TaskHeadParams::zeros(
                t.head.w1.cols(),
                t.head.w1.rows(),
                t.head.w2.cols() - t.head.w1.rows(),
                t.head.b2.len(),
            ),
            embeddings: SparseRows::new(),
        }
    }

    pub fn add_assign(&mut self, o: &Gradients) {
        assert_eq!(self.task, o.task, "cannot sum gradients of different tasks");
        self.shared.add_assign(&o.shared);
        self.private.add_assign(&o.private);
        self.head.add_assign(&o.head);
        self.embeddings.merge(&o.embeddings);
    }

    pub fn network_is_finite(&self) -> bool {
        self.shared.is_finite() && self.private.is_finite() && self.head.is_finite()
    }

    pub fn embeddings_are_finite(&self) -> bool {
        self.embeddings.is_finite()
    }

    /// Dense copy of the gradient for `block`, zero where this task has no say.
    pub fn block(&self, state: &ModelState, block: ParamBlock) -> Vec<f64> {
        let own = |t: usize| t == self.task;
        match block {
            ParamBlock::SharedFilters => self.shared.filters.as_slice().to_vec(),
            ParamBlock::SharedBiases => self.shared.biases.as_slice().to_vec(),
            ParamBlock::Embeddings => {
                let d = state.embeddings.dim();
                let mut out = vec![0.0; state.embeddings.vocab_size() * d];
                for (id, row) in self.embeddings.iter() {
                    out[id * d..(id + 1) * d].copy_from_slice(row);
                }
                out
            }
            b => {
                let t = b.task().expect("task block");
                if !own(t) {
                    return vec![0.0; state.block_len(b)];
                }
                match b {
                    ParamBlock::Filters(_) => self.private.filters.as_slice().to_vec(),
                    ParamBlock::Biases(_) => self.private.biases.as_slice().to_vec(),
                    ParamBlock::W1(_) => self.head.w1.as_slice().to_vec(),
                    ParamBlock::B1(_) => self.head.b1.as_slice().to_vec(),
                    ParamBlock::W2(_) => self.head.w2.as_slice().to_vec(),
                    ParamBlock::B2(_) => self.head.b2.as_slice().to_vec(),
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Addressable parameter groups, used by gradient checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamBlock {
    SharedFilters,
    SharedBiases,
    Filters(usize),
    Biases(usize),
    W1(usize),
    B1(usize),
    W2(usize),
    B2(usize),
    Embeddings,
}

impl ParamBlock {
    pub fn task(self) -> Option<usize> {
        match self {
            ParamBlock::Filters(t)
            | ParamBlock::Biases(t)
            | ParamBlock::W1(t)
            | ParamBlock::B1(t)
            | ParamBlock::W2(t)
            | ParamBlock::B2(t) => Some(t),
            _ => None,
        }
    }

    pub fn name(self, state: &ModelState) -> String {
        let tn = |t: usize| state.tasks[t].spec.name.as_str();
        match self {
            ParamBlock::SharedFilters => "shared.filters".into(),
            ParamBlock::SharedBiases => "shared.biases".into(),
            ParamBlock::Filters(t) => format!("{}.filters", tn(t)),
            ParamBlock::Biases(t) => format!("{}.biases", tn(t)),
            ParamBlock::W1(t) => format!("{}.w1", tn(t)),
            ParamBlock::B1(t) => format!("{}.b1", tn(t)),
            ParamBlock::W2(t) => format!("{}.w2", tn(t)),
            ParamBlock::B2(t) => format!("{}.b2", tn(t)),
            ParamBlock::Embeddings => "embeddings".into(),
        }
    }
}

impl ModelState {
    /// Randomly initialized network around an existing embedding table.
    ///
    /// `tasks` pairs each spec with its fitted feature templates.
    pub fn new(
        vocab: Vocabulary,
        embeddings: EmbeddingTable,
        shared_spec: SharedSpec,
        tasks: Vec<(TaskSpec, FeatureTemplateSet)>,
        seed: u64,
    ) -> Result<Self> {
        let mut errs: Vec<String> = tasks.iter().flat_map(|(s, _)| s.validate()).collect();
        if tasks.is_empty() {
            errs.push("at least one task is required".into());
        }
        if shared_spec.window == 0 || shared_spec.pool == 0 || shared_spec.filters == 0 {
            errs.push("shared encoder h, n_p and n_f must be positive".into());
        }
        if vocab.len() != embeddings.vocab_size() {
            errs.push(format!(
                "vocabulary has {} tokens but the embedding table has {} rows",
                vocab.len(),
                embeddings.vocab_size()
            ));
        }
        for (i, (a, _)) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|(b, _)| b.name == a.name) {
                errs.push(format!("duplicate task name {:?}", a.name));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }

        let dim = embeddings.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shared = EncoderParams::init_uniform(
            shared_spec.window,
            shared_spec.pool,
            shared_spec.filters,
            dim,
            &mut rng,
        );
        let tasks = tasks
            .into_iter()
            .map(|(spec, features)| {
                let encoder =
                    EncoderParams::init_uniform(spec.window, spec.pool, spec.filters, dim, &mut rng);
                let head = TaskHeadParams::init_uniform(
                    encoder.output_len() + shared.output_len(),
                    spec.fusion_dim,
                    features.dim(),
                    spec.num_classes(),
                    &mut rng,
                );
                TaskState {
                    spec,
                    features,
                    encoder,
                    head,
                }
            })
            .collect();
        Ok(ModelState {
            vocab,
            embeddings,
            shared_spec,
            shared,
            tasks,
            updates: 0,
        })
    }

    pub fn task_index(&self, name: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.spec.name == name)
            .ok_or_else(|| Error::Config(vec![format!("task {name:?} is not registered")]))
    }

    fn check_task(&self, task: usize) -> Result<&TaskState> {
        self.tasks
            .get(task)
            .ok_or_else(|| Error::Config(vec![format!("task index {task} is not registered")]))
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| if t == PAD_TOKEN { PAD } else { self.vocab.id(t) })
            .collect()
    }

    /// Maps a pair to ids and features without looking at its label.
    pub fn prepare_input(&self, task: usize, pair: &ArgumentPair) -> Result<Input> {
        let t = self.check_task(task)?;
        if pair.arg1.is_empty() || pair.arg2.is_empty() {
            return Err(Error::Rejected("argument with no tokens".into()));
        }
        Ok(Input {
            ids1: self.token_ids(&pair.arg1),
            ids2: self.token_ids(&pair.arg2),
            features: extract(pair, &t.features),
        })
    }

    pub fn prepare(&self, task: usize, pair: &ArgumentPair) -> Result<Example> {
        let t = self.check_task(task)?;
        validate_pair(pair, &t.spec.name, &t.spec.labels).map_err(Error::Rejected)?;
        Ok(Example {
            input: self.prepare_input(task, pair)?,
            label: t.spec.labels.index(&pair.label).expect("validated"),
        })
    }

    pub fn forward(&self, task: usize, pair: &ArgumentPair) -> Result<(Vec1, ForwardCache)> {
        let input = self.prepare_input(task, pair)?;
        self.forward_input(task, &input)
    }

    pub fn forward_input(&self, task: usize, input: &Input) -> Result<(Vec1, ForwardCache)> {
        let t = self.check_task(task)?;
        let (p_t, private) = encoder::encode_ids(&t.encoder, &self.embeddings, &input.ids1, &input.ids2)?;
        let (p_s, shared) = encoder::encode_ids(&self.shared, &self.embeddings, &input.ids1, &input.ids2)?;
        let encoded = Vec1::concat(&[p_t.as_slice(), p_s.as_slice()]);
        let mut z1 = matvec(&t.head.w1, encoded.as_slice())?;
        for (z, b) in z1.as_mut_slice().iter_mut().zip(t.head.b1.as_slice()) {
            *z = (*z + b).tanh();
        }
        let q = z1;
        let r = Vec1::concat(&[q.as_slice(), input.features.to_dense().as_slice()]);
        let mut z2 = matvec(&t.head.w2, r.as_slice())?;
        add_into(z2.as_mut_slice(), t.head.b2.as_slice());
        let probs = softmax(z2.as_slice());
        Ok((
            probs.clone(),
            ForwardCache {
                task,
                version: self.updates,
                private,
                shared,
                encoded,
                q,
                r,
                probs,
            },
        ))
    }

    /// Gradients of `-log l[gold]` with respect to every parameter the task uses.
    pub fn backward(&self, task: usize, cache: &ForwardCache, gold: usize) -> Result<Gradients> {
        if cache.version != self.updates {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.updates,
            });
        }
        if cache.task != task {
            return Err(Error::Rejected(format!(
                "cache was computed for task {} not {task}",
                cache.task
            )));
        }
        let t = self.check_task(task)?;
        if gold >= t.spec.num_classes() {
            return Err(Error::Rejected(format!("gold label {gold} out of range")));
        }
        let mut g = Gradients::zeros(self, task);

        let mut dz2 = cache.probs.clone();
        dz2[gold] -= 1.0;
        g.head.w2.add_outer(1.0, dz2.as_slice(), cache.r.as_slice());
        g.head.b2 = dz2.clone();

        let dr = t.head.w2.transpose_matvec(dz2.as_slice())?;
        let n_r = cache.q.len();
        let dz1: Vec<f64> = dr.as_slice()[..n_r]
            .iter()
            .zip(cache.q.as_slice())
            .map(|(d, q)| d * (1.0 - q * q))
            .collect();
        g.head.w1.add_outer(1.0, &dz1, cache.encoded.as_slice());
        g.head.b1 = Vec1::new(dz1.clone());

        let dp = t.head.w1.transpose_matvec(&dz1)?;
        let split = t.encoder.output_len();
        encoder::backward(&t.encoder, &cache.private, &dp.as_slice()[..split], &mut g.private, &mut g.embeddings);
        encoder::backward(&self.shared, &cache.shared, &dp.as_slice()[split..], &mut g.shared, &mut g.embeddings);
        Ok(g)
    }

    /// Argmax of the task's output distribution; the first class wins ties.
    pub fn predict(&self, task: usize, pair: &ArgumentPair) -> Result<usize> {
        Ok(self.forward(task, pair)?.0.argmax())
    }

    pub fn predict_input(&self, task: usize, input: &Input) -> Result<usize> {
        Ok(self.forward_input(task, input)?.0.argmax())
    }

    /// `Θ -= net_scale · g` over the task's network parameters and
    /// `Θ_e -= emb_scale · g_e` over trainable embedding rows.
    /// A zero `emb_scale` leaves the table untouched.
    pub fn apply_gradients(&mut self, g: &Gradients, net_scale: f64, emb_scale: f64) {
        let sub = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= net_scale * s;
            }
        };
        sub(self.shared.filters_mut().as_mut_slice(), g.shared.filters.as_slice());
        sub(self.shared.biases_mut().as_mut_slice(), g.shared.biases.as_slice());
        let t = &mut self.tasks[g.task];
        sub(t.encoder.filters_mut().as_mut_slice(), g.private.filters.as_slice());
        sub(t.encoder.biases_mut().as_mut_slice(), g.private.biases.as_slice());
        let src = [
            g.head.w1.as_slice(),
            g.head.b1.as_slice(),
            g.head.w2.as_slice(),
            g.head.b2.as_slice(),
        ];
        for (dst, src) in t.head.slices_mut().into_iter().zip(src) {
            sub(dst, src);
        }
        if emb_scale != 0.0 {
            for (id, row) in g.embeddings.iter() {
                self.embeddings.apply_row_update(id, emb_scale, row);
            }
        }
        self.updates += 1;
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut b = vec![ParamBlock::SharedFilters, ParamBlock::SharedBiases];
        for t in 0..self.tasks.len() {
            b.extend([
                ParamBlock::Filters(t),
                ParamBlock::Biases(t),
                ParamBlock::W1(t),
                ParamBlock::B1(t),
                ParamBlock::W2(t),
                ParamBlock::B2(t),
            ]);
        }
        b.push(ParamBlock::Embeddings);
        b
    }

    pub fn block_len(&self, b: ParamBlock) -> usize {
        self.block(b).len()
    }

    pub fn block(&self, b: ParamBlock) -> &[f64] {
        match b {
            ParamBlock::SharedFilters => self.shared.filters().as_slice(),
            ParamBlock::SharedBiases => self.shared.biases().as_slice(),
            ParamBlock::Filters(t) => self.tasks[t].encoder.filters().as_slice(),
            ParamBlock::Biases(t) => self.tasks[t].encoder.biases().as_slice(),
            ParamBlock::W1(t) => self.tasks[t].head.w1.as_slice(),
            ParamBlock::B1(t) => self.tasks[t].head.b1.as_slice(),
            ParamBlock::W2(t) => self.tasks[t].head.w2.as_slice(),
            ParamBlock::B2(t) => self.tasks[t].head.b2.as_slice(),
            ParamBlock::Embeddings => self.embeddings.matrix().as_slice(),
        }
    }

    /// Mutable access for perturbation. Writing to the `<pad>` row breaks
    /// the zero-padding invariant; callers must restore it.
    pub fn block_mut(&mut self, b: ParamBlock) -> &mut [f64] {
        match b {
            ParamBlock::SharedFilters => self.shared.filters_mut().as_mut_slice(),
            ParamBlock::SharedBiases => self.shared.biases_mut().as_mut_slice(),
            ParamBlock::Filters(t) => self.tasks[t].encoder.filters_mut().as_mut_slice(),
            ParamBlock::Biases(t) => self.tasks[t].encoder.biases_mut().as_mut_slice(),
            ParamBlock::W1(t) => self.tasks[t].head.w1.as_mut_slice(),
            ParamBlock::B1(t) => self.tasks[t].head.b1.as_mut_slice(),
            ParamBlock::W2(t) => self.tasks[t].head.w2.as_mut_slice(),
            ParamBlock::B2(t) => self.tasks[t].head.b2.as_mut_slice(),
            ParamBlock::Embeddings => self.embeddings.weights_mut().as_mut_slice(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.shared.is_finite()
            && self.embeddings.matrix().is_finite()
            && self
                .tasks
                .iter()
                .all(|t| t.encoder.is_finite() && t.head.is_finite())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(
            &mut w,
            &CheckpointRef {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                model: self,
            },
        )?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(f))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let mut m = ck.model;
        m.vocab.reindex()?;
        for t in &mut m.tasks {
            t.features.reindex();
        }
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<()> {
        let dim = self.embeddings.dim();
        let mut errs = Vec::new();
        if self.vocab.len() != self.embeddings.vocab_size() {
            errs.push("vocabulary and embedding table sizes differ".to_string());
        }
        if self.shared.input_dim() != dim {
            errs.push("shared encoder dimension differs from the embeddings".into());
        }
        for t in &self.tasks {
            let n = &t.spec.name;
            let enc_len = t.encoder.output_len() + self.shared.output_len();
            if t.encoder.input_dim() != dim {
                errs.push(format!("{n}: encoder dimension differs from the embeddings"));
            }
            if t.head.w1.shape() != (t.spec.fusion_dim, enc_len) || t.head.b1.len() != t.spec.fusion_dim {
                errs.push(format!("{n}: fusion layer shape mismatch"));
            }
            let classes = t.spec.num_classes();
            if t.head.w2.shape() != (classes, t.spec.fusion_dim + t.features.dim()) || t.head.b2.len() != classes {
                errs.push(format!("{n}: output layer shape mismatch"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(errs.join("; ")))
        }
    }
}

/// Cross-entropy `-log l[gold]`, with `l[gold]` floored at [`PROB_FLOOR`].
pub fn loss(probs: &Vec1, gold: usize) -> Result<f64> {
    if gold >= probs.len() {
        return Err(Error::Rejected(format!(
            "gold label {gold} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs[gold];
    if p < PROB_FLOOR {
        log::warn!("probability of the gold class {p:e} clamped to {PROB_FLOOR:e}");
    }
    Ok(-p.max(PROB_FLOOR).ln())
}

const CHECKPOINT_FORMAT: &str = "discourse-mtl-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: String,
    version: u32,
    model: &'a ModelState,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: ModelState,
}
