//! Vocabulary and word-embedding table.
//!
//! Token ids 0 and 1 are reserved for `<pad>` and `<unk>`. The padding row is
//! all zeros and never trained, so padding added to short arguments adds
//! nothing to any convolution sum.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Mat2;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// Lowercases a token. No other normalization is applied.
pub fn normalize(token: &str) -> String {
    token.to_lowercase()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::from_token_list(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()])
    }

    fn from_token_list(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Builds a vocabulary from every token in `tokens`, in first-seen order.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocabulary::new();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    /// Adds a token (normalized) and returns its id.
    pub fn insert(&mut self, token: &str) -> usize {
        let t = normalize(token);
        if let Some(&id) = self.index.get(&t) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(t.clone(), id);
        self.tokens.push(t);
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(&normalize(token)).copied()
    }

    /// Id of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds the lookup index after deserialization.
    pub(crate) fn reindex(&mut self) -> Result<()> {
        if self.tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || self.tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::Checkpoint(
                "vocabulary must start with <pad> and <unk>".into(),
            ));
        }
        *self = Self::from_token_list(std::mem::take(&mut self.tokens));
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    weights: Mat2,
    trainable: Vec<bool>,
}

impl EmbeddingTable {
    /// A zero table with every row except `<pad>` trainable.
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        assert!(vocab_size >= 2, "vocabulary must hold <pad> and <unk>");
        let mut trainable = vec![true; vocab_size];
        trainable[PAD] = false;
        EmbeddingTable {
            weights: Mat2::zeros(vocab_size, dim),
            trainable,
        }
    }

    pub fn from_matrix(weights: Mat2) -> Result<Self> {
        if weights.rows() < 2 || !weights.is_finite() {
            return Err(Error::Rejected(
                "embedding matrix needs >= 2 finite rows".into(),
            ));
        }
        if weights.row(PAD).iter().any(|&x| x != 0.0) {
            return Err(Error::Rejected("the <pad> row must be zero".into()));
        }
        let mut t = EmbeddingTable::zeros(weights.rows(), weights.cols());
        t.weights = weights;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.weights.row(id)
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        self.weights.row_mut(id)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Mat2 {
        &mut self.weights
    }

    pub fn is_trainable(&self, id: usize) -> bool {
        self.trainable[id]
    }

    pub fn set_trainable(&mut self, id: usize, trainable: bool) {
        if id != PAD {
            self.trainable[id] = trainable;
        }
    }

    /// `row(id) -= scale * grad`, skipped for frozen rows.
    pub fn apply_row_update(&mut self, id: usize, scale: f64, grad: &[f64]) {
        if !self.trainable[id] {
            return;
        }
        for (w, g) in self.weights.row_mut(id).iter_mut().zip(grad) {
            *w -= scale * g;
        }
    }

    /// Embeddings for `ids`, one row per id.
    pub fn lookup_ids(&self, ids: &[usize]) -> Mat2 {
        let mut data = Vec::with_capacity(ids.len() * self.dim());
        for &id in ids {
            data.extend_from_slice(self.row(id));
        }
        Mat2::from_vec(ids.len(), self.dim(), data).expect("row lengths agree")
    }

    /// Writes `token v1 ... vD` lines for every row except `<pad>`.
    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let write_all = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            for id in 1..self.vocab_size() {
                write!(w, "{}", vocab.token(id).unwrap_or(UNK_TOKEN))?;
                for x in self.row(id) {
                    write!(w, " {x}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        write_all(&mut w).map_err(|e| Error::io(path, e))
    }
}

/// Gradient rows for the embedding table, keyed by token id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseRows {
    pub fn new() -> Self {
        Self::default()
    }

    /// `row(id) += scale * values`.
    pub fn add_scaled(&mut self, id: usize, scale: f64, values: &[f64]) {
        let row = self
            .rows
            .entry(id)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (r, v) in row.iter_mut().zip(values) {
            *r += scale * v;
        }
    }

    pub fn merge(&mut self, other: &SparseRows) {
        for (&id, row) in &other.rows {
            self.add_scaled(id, 1.0, row);
        }
    }

    pub fn get(&self, id: usize) -> Option<&[f64]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    /// Rows in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&id, r)| (id, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|x| x.is_finite())
    }
}

/// Reads a pretrained embedding file (`token v1 ... vD` per line).
///
/// `<unk>` takes the mean of all loaded vectors unless the file supplies its
/// own `<unk>` line; a `<pad>` line is skipped. Duplicate tokens keep their
/// first vector.
pub fn load_pretrained(path: &Path, expected_dim: usize) -> Result<(Vocabulary, EmbeddingTable)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    read_pretrained(BufReader::new(f), &name, expected_dim)
}

pub fn read_pretrained(
    reader: impl BufRead,
    source_name: &str,
    expected_dim: usize,
) -> Result<(Vocabulary, EmbeddingTable)> {
    let mut vocab = Vocabulary::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut unk: Option<Vec<f64>> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(source_name, lineno, format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != expected_dim {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected {expected_dim} values, found {}", values.len()),
            ));
        }
        match token {
            PAD_TOKEN => continue,
            UNK_TOKEN => {
                unk.get_or_insert(values);
            }
            _ => {
                if vocab.get(token).is_some() {
                    log::warn!("{source_name}: line {lineno}: duplicate token {token:?} ignored");
                    continue;
                }
                vocab.insert(token);
                rows.push(values);
            }
        }
    }

    let mut table = EmbeddingTable::zeros(vocab.len(), expected_dim);
    let unk = unk.unwrap_or_else(|| {
        let mut mean = vec![0.0; expected_dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        if !rows.is_empty() {
            let n = rows.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        mean
    });
    table.row_mut(UNK).copy_from_slice(&unk);
    for (i, r) in rows.iter().enumerate() {
        table.row_mut(i + 2).copy_from_slice(r);
    }
    Ok((vocab, table))
}

/// Uniform `[-scale, scale]` entries from a seeded generator; `<pad>` stays zero.
pub fn random_init(vocab: &Vocabulary, dim: usize, scale: f64, seed: u64) -> EmbeddingTable {
    assert!(dim >= 1 && scale > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::zeros(vocab.len(), dim);
    for id in 1..vocab.len() {
        for x in table.row_mut(id) {
            *x = rng.gen_range(-scale..=scale);
        }
    }
    table
}

/// Embeds a token sequence; unknown tokens map to `<unk>`.
pub fn lookup_sequence(tokens: &[&str], vocab: &Vocabulary, table: &EmbeddingTable) -> Mat2 {
    let ids: Vec<usize> = tokens
        .iter()
        .map(|&t| if t == PAD_TOKEN { PAD } else { vocab.id(t) })
        .collect();
    table.lookup_ids(&ids)
}
