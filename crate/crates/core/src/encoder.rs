//! Window-pair convolution and dynamic pooling over an argument pair.
//!
//! Each filter `k` scores every pair of `h`-token windows, one from each
//! argument:
//!
//! ```text
//! c[i][j] = tanh(w_k · [x1[i..i+h], x2[j..j+h]] + b_k)
//! ```
//!
//! The filter splits into an Arg1 half and an Arg2 half, so the score is
//! `tanh(u[i] + v[j] + b_k)` with `u[i] = w_k[..hD] · x1[i..i+h]` and
//! `v[j] = w_k[hD..] · x2[j..j+h]`. The forward pass computes `u` and `v` once
//! per window and fills the map in `O(rows · cols)`.
//!
//! The map is then cut into an `n_p × n_p` grid with floor boundaries
//! `r_k = ⌊k · rows / n_p⌋` and each cell keeps its maximum. The pooled
//! tensor is flattened filter-major, then row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ArgumentPair;
use crate::embedding::{EmbeddingTable, SparseRows, Vocabulary, PAD, PAD_TOKEN};
use crate::error::{Error, Result};
use crate::tensor::{dot, window_max, Mat2, Ten3, Vec1};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    window: usize,
    pool: usize,
    /// `n_f × 2hD`; columns `[0, hD)` see Arg1, `[hD, 2hD)` see Arg2.
    filters: Mat2,
    biases: Vec1,
}

impl EncoderParams {
    /// All-zero parameters.
    pub fn zeros(window: usize, pool: usize, num_filters: usize, dim: usize) -> Self {
        assert!(window >= 1 && pool >= 1 && num_filters >= 1 && dim >= 1);
        EncoderParams {
            window,
            pool,
            filters: Mat2::zeros(num_filters, 2 * window * dim),
            biases: Vec1::zeros(num_filters),
        }
    }

    /// Filters uniform in `[-r, r]` with `r = sqrt(6 / (2hD + 1))`, zero biases.
    pub fn init_uniform(
        window: usize,
        pool: usize,
        num_filters: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(window, pool, num_filters, dim);
        let fan = p.filters.cols() as f64 + 1.0;
        let r = (6.0 / fan).sqrt();
        for w in p.filters.as_mut_slice() {
            *w = rng.gen_range(-r..=r);
        }
        p
    }

    pub fn from_parts(window: usize, pool: usize, filters: Mat2, biases: Vec1) -> Result<Self> {
        if window == 0 || pool == 0 || filters.rows() == 0 {
            return Err(Error::Rejected("h, n_p and n_f must be positive".into()));
        }
        if !filters.cols().is_multiple_of(2 * window) || filters.cols() == 0 {
            return Err(Error::Rejected(format!(
                "filter length {} is not a positive multiple of 2h = {}",
                filters.cols(),
                2 * window
            )));
        }
        if biases.len() != filters.rows() {
            return Err(Error::Rejected(format!(
                "{} filters but {} biases",
                filters.rows(),
                biases.len()
            )));
        }
        Ok(EncoderParams {
            window,
            pool,
            filters,
            biases,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn pool(&self) -> usize {
        self.pool
    }

    pub fn num_filters(&self) -> usize {
        self.filters.rows()
    }

    /// Embedding dimension `D` the filters were built for.
    pub fn input_dim(&self) -> usize {
        self.filters.cols() / (2 * self.window)
    }

    /// `n_p · n_p · n_f`.
    pub fn output_len(&self) -> usize {
        self.pool * self.pool * self.num_filters()
    }

    /// Shortest argument that still yields an `n_p × n_p` feature map.
    pub fn min_arg_len(&self) -> usize {
        self.window + self.pool - 1
    }

    pub fn filters(&self) -> &Mat2 {
        &self.filters
    }

    pub fn filters_mut(&mut self) -> &mut Mat2 {
        &mut self.filters
    }

    pub fn biases(&self) -> &Vec1 {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut Vec1 {
        &mut self.biases
    }

    pub fn is_finite(&self) -> bool {
        self.filters.is_finite() && self.biases.is_finite()
    }
}

/// One `(rows, cols)` matrix per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    maps: Vec<Mat2>,
}

impl FeatureMap {
    pub fn maps(&self) -> &[Mat2] {
        &self.maps
    }

    pub fn shape(&self) -> (usize, usize) {
        self.maps.first().map_or((0, 0), Mat2::shape)
    }
}

/// Pooled cells `(n_f, n_p, n_p)` and the feature-map coordinate each came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledGrid {
    values: Ten3,
    argmax: Vec<(usize, usize)>,
}

impl PooledGrid {
    pub fn values(&self) -> &Ten3 {
        &self.values
    }

    /// Source coordinate of cell `(k, u, v)`, in flattening order.
    pub fn argmax(&self) -> &[(usize, usize)] {
        &self.argmax
    }

    pub fn flatten(&self) -> Vec1 {
        self.values.flatten()
    }
}

/// Pads both arguments with `<pad>` up to `h + n_p - 1` tokens.
pub fn pad_arguments(pair: &ArgumentPair, window: usize, pool: usize) -> ArgumentPair {
    let min_len = window + pool - 1;
    let pad = |tokens: &[String]| {
        let mut t = tokens.to_vec();
        if t.len() < min_len {
            t.resize(min_len, PAD_TOKEN.to_string());
        }
        t
    };
    ArgumentPair {
        arg1: pad(&pair.arg1),
        arg2: pad(&pair.arg2),
        ..pair.clone()
    }
}

pub(crate) fn pad_ids(ids: &[usize], min_len: usize) -> Vec<usize> {
    let mut out = ids.to_vec();
    if out.len() < min_len {
        out.resize(min_len, PAD);
    }
    out
}

pub fn convolve_pair(a1: &Mat2, a2: &Mat2, params: &EncoderParams) -> Result<FeatureMap> {
    let h = params.window;
    let d = params.input_dim();
    if a1.cols() != d || a2.cols() != d {
        return Err(Error::Rejected(format!(
            "encoder expects {d}-dimensional embeddings, got {} and {}",
            a1.cols(),
            a2.cols()
        )));
    }
    if a1.rows() < h || a2.rows() < h {
        return Err(Error::Rejected(format!(
            "arguments of {} and {} tokens are shorter than the window {h}",
            a1.rows(),
            a2.rows()
        )));
    }
    let rows = a1.rows() - h + 1;
    let cols = a2.rows() - h + 1;
    let half = h * d;
    let maps = (0..params.num_filters())
        .map(|k| {
            let w = params.filters.row(k);
            let b = params.biases[k];
            let u: Vec<f64> = (0..rows)
                .map(|i| dot(&w[..half], a1.row_block(i, h)))
                .collect();
            let v: Vec<f64> = (0..cols)
                .map(|j| dot(&w[half..], a2.row_block(j, h)) + b)
                .collect();
            let mut m = Mat2::zeros(rows, cols);
            for (i, ui) in u.iter().enumerate() {
                for (c, vj) in m.row_mut(i).iter_mut().zip(&v) {
                    *c = (ui + vj).tanh();
                }
            }
            m
        })
        .collect();
    Ok(FeatureMap { maps })
}

/// `k`-th boundary of `len` cut into `parts` pieces, `k = 0..=parts`.
pub fn pool_boundary(len: usize, parts: usize, k: usize) -> usize {
    k * len / parts
}

pub fn dynamic_pool(fm: &FeatureMap, pool: usize) -> Result<PooledGrid> {
    let (rows, cols) = fm.shape();
    if rows < pool || cols < pool {
        return Err(Error::Rejected(format!(
            "feature map {rows}x{cols} is smaller than the {pool}x{pool} pooling grid"
        )));
    }
    let mut values = Ten3::zeros(fm.maps.len(), pool, pool);
    let mut argmax = Vec::with_capacity(fm.maps.len() * pool * pool);
    for (k, map) in fm.maps.iter().enumerate() {
        for u in 0..pool {
            let (r0, r1) = (pool_boundary(rows, pool, u), pool_boundary(rows, pool, u + 1));
            for v in 0..pool {
                let (c0, c1) = (pool_boundary(cols, pool, v), pool_boundary(cols, pool, v + 1));
                let (best, at) = window_max(map, r0, r1, c0, c1)?;
                values[(k, u, v)] = best;
                argmax.push(at);
            }
        }
    }
    Ok(PooledGrid { values, argmax })
}

/// Encodes one argument pair into a vector of length `n_p · n_p · n_f`.
pub fn encode(
    pair: &ArgumentPair,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    params: &EncoderParams,
) -> Result<Vec1> {
    if pair.arg1.is_empty() || pair.arg2.is_empty() {
        return Err(Error::Rejected("argument with no tokens".into()));
    }
    let ids = |tokens: &[String]| -> Vec<usize> {
        tokens
            .iter()
            .map(|t| if t == PAD_TOKEN { PAD } else { vocab.id(t) })
            .collect()
    };
    let (out, _) = encode_ids(params, table, &ids(&pair.arg1), &ids(&pair.arg2))?;
    Ok(out)
}

/// Everything the backward pass needs from one forward encoding.
#[derive(Clone, Debug)]
pub(crate) struct EncoderCache {
    ids1: Vec<usize>,
    ids2: Vec<usize>,
    x1: Mat2,
    x2: Mat2,
    pooled: PooledGrid,
}

pub(crate) fn encode_ids(
    params: &EncoderParams,
    table: &EmbeddingTable,
    ids1: &[usize],
    ids2: &[usize],
) -> Result<(Vec1, EncoderCache)> {
    let ids1 = pad_ids(ids1, params.min_arg_len());
    let ids2 = pad_ids(ids2, params.min_arg_len());
    let x1 = table.lookup_ids(&ids1);
    let x2 = table.lookup_ids(&ids2);
    let fm = convolve_pair(&x1, &x2, params)?;
    let pooled = dynamic_pool(&fm, params.pool)?;
    Ok((
        pooled.flatten(),
        EncoderCache {
            ids1,
            ids2,
            x1,
            x2,
            pooled,
        },
    ))
}

/// Gradients with the same layout as [`EncoderParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads {
    pub filters: Mat2,
    pub biases: Vec1,
}

impl EncoderGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        EncoderGrads {
            filters: Mat2::zeros(p.filters.rows(), p.filters.cols()),
            biases: Vec1::zeros(p.biases.len()),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        add_into(self.filters.as_mut_slice(), other.filters.as_slice());
        add_into(self.biases.as_mut_slice(), other.biases.as_slice());
    }

    pub fn is_finite(&self) -> bool {
        self.filters.is_finite() && self.biases.is_finite()
    }
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Routes `grad_out` (one entry per pooled cell) back through the pooling
/// argmax and the convolution, accumulating into `grads` and `emb`.
/// `<pad>` rows get no embedding gradient.
pub(crate) fn backward(
    params: &EncoderParams,
    cache: &EncoderCache,
    grad_out: &[f64],
    grads: &mut EncoderGrads,
    emb: &mut SparseRows,
) {
    let h = params.window;
    let d = params.input_dim();
    let half = h * d;
    let cells = params.pool * params.pool;
    debug_assert_eq!(grad_out.len(), cells * params.num_filters());
    let rows = cache.x1.rows() - h + 1;
    let cols = cache.x2.rows() - h + 1;
    let pooled = cache.pooled.values.as_slice();

    for k in 0..params.num_filters() {
        let mut du = vec![0.0; rows];
        let mut dv = vec![0.0; cols];
        let mut db = 0.0;
        for cell in k * cells..(k + 1) * cells {
            let g = grad_out[cell];
            if g == 0.0 {
                continue;
            }
            let c = pooled[cell];
            let (i, j) = cache.pooled.argmax[cell];
            let dpre = g * (1.0 - c * c);
            du[i] += dpre;
            dv[j] += dpre;
            db += dpre;
        }
        grads.biases[k] += db;

        let w = params.filters.row(k);
        let gw = grads.filters.row_mut(k);
        for (i, &g) in du.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gw, x) in gw[..half].iter_mut().zip(cache.x1.row_block(i, h)) {
                *gw += g * x;
            }
        }
        for (j, &g) in dv.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gw, x) in gw[half..].iter_mut().zip(cache.x2.row_block(j, h)) {
                *gw += g * x;
            }
        }
        scatter_rows(&cache.ids1, &du, &w[..half], h, d, emb);
        scatter_rows(&cache.ids2, &dv, &w[half..], h, d, emb);
    }
}

fn scatter_rows(ids: &[usize], dwin: &[f64], w: &[f64], h: usize, d: usize, emb: &mut SparseRows) {
    for (start, &g) in dwin.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for o in 0..h {
            let id = ids[start + o];
            if id != PAD {
                emb.add_scaled(id, g, &w[o * d..(o + 1) * d]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::random_init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat2 {
        Mat2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    /// Direct reading of the convolution: concatenate both windows, dot, tanh.
    fn oracle_conv(a1: &Mat2, a2: &Mat2, p: &EncoderParams) -> Vec<Vec<Vec<f64>>> {
        let h = p.window();
        let d = a1.cols();
        let mut out = vec![];
        for k in 0..p.num_filters() {
            let mut map = vec![];
            for i in 0..=a1.rows() - h {
                let mut row = vec![];
                for j in 0..=a2.rows() - h {
                    let mut s = p.biases()[k];
                    for o in 0..h {
                        for e in 0..d {
                            s += p.filters()[(k, o * d + e)] * a1[(i + o, e)];
                            s += p.filters()[(k, h * d + o * d + e)] * a2[(j + o, e)];
                        }
                    }
                    row.push(s.tanh());
                }
                map.push(row);
            }
            out.push(map);
        }
        out
    }

    #[test]
    fn zero_inputs_give_zero_map() {
        let p = EncoderParams::init_uniform(2, 2, 3, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let fm = convolve_pair(&Mat2::zeros(5, 4), &Mat2::zeros(6, 4), &p).unwrap();
        assert!(fm.maps().iter().all(|m| m.as_slice().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn feature_map_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = EncoderParams::init_uniform(5, 2, 2, 3, &mut rng);
        let fm = convolve_pair(&random_mat(7, 3, &mut rng), &random_mat(9, 3, &mut rng), &p).unwrap();
        assert_eq!(fm.shape(), (3, 5));
        assert_eq!(fm.maps().len(), 2);
    }

    #[test]
    fn convolution_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = EncoderParams::init_uniform(2, 2, 1, 2, &mut rng);
        p.biases_mut()[0] = 0.3;
        let a1 = random_mat(6, 2, &mut rng);
        let a2 = random_mat(5, 2, &mut rng);
        let fm = convolve_pair(&a1, &a2, &p).unwrap();
        let want = oracle_conv(&a1, &a2, &p);
        for (i, row) in want[0].iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert!((fm.maps()[0][(i, j)] - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let p = EncoderParams::zeros(3, 2, 1, 4);
        assert!(convolve_pair(&Mat2::zeros(2, 4), &Mat2::zeros(5, 4), &p).is_err());
        assert!(convolve_pair(&Mat2::zeros(5, 3), &Mat2::zeros(5, 3), &p).is_err());
    }

    #[test]
    fn padding_lengths() {
        let pair = |a: usize, b: usize| ArgumentPair::new(
            "t",
            (0..a).map(|i| format!("w{i}")).collect(),
            (0..b).map(|i| format!("v{i}")).collect(),
            "x",
        );
        let p = pad_arguments(&pair(3, 40), 5, 10);
        assert_eq!(p.arg1.len(), 14);
        assert_eq!(p.arg1[3], PAD_TOKEN);
        assert_eq!(p.arg2.len(), 40);
        let p = pad_arguments(&pair(1, 1), 4, 8);
        assert_eq!((p.arg1.len(), p.arg2.len()), (11, 11));
    }

    #[test]
    fn pooling_identity_when_map_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_mat(3, 3, &mut rng);
        let pooled = dynamic_pool(&FeatureMap { maps: vec![m.clone()] }, 3).unwrap();
        assert_eq!(pooled.flatten().as_slice(), m.as_slice());
    }

    #[test]
    fn pooling_quadrants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_mat(10, 10, &mut rng);
        let pooled = dynamic_pool(&FeatureMap { maps: vec![m.clone()] }, 2).unwrap();
        for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut best = f64::NEG_INFINITY;
            for r in 5 * u..5 * u + 5 {
                for c in 5 * v..5 * v + 5 {
                    best = best.max(m[(r, c)]);
                }
            }
            assert_eq!(pooled.values()[(0, u, v)], best);
        }
    }

    #[test]
    fn pooling_monotone_map() {
        let m = Mat2::from_vec(7, 5, (0..35).map(f64::from).collect()).unwrap();
        let pooled = dynamic_pool(&FeatureMap { maps: vec![m] }, 3).unwrap();
        assert_eq!(pooled.values()[(0, 2, 2)], 34.0);
        assert_eq!(*pooled.argmax().last().unwrap(), (6, 4));
    }

    #[test]
    fn pooling_rejects_small_map() {
        let fm = FeatureMap { maps: vec![Mat2::zeros(2, 5)] };
        assert!(dynamic_pool(&fm, 3).is_err());
    }

    #[test]
    fn boundaries_cover_every_index() {
        for len in 1..30 {
            for parts in 1..=len {
                assert_eq!(pool_boundary(len, parts, 0), 0);
                assert_eq!(pool_boundary(len, parts, parts), len);
                for k in 0..parts {
                    assert!(pool_boundary(len, parts, k) < pool_boundary(len, parts, k + 1));
                }
            }
        }
    }

    #[test]
    fn output_lengths_for_default_settings() {
        assert_eq!(EncoderParams::zeros(5, 10, 80, 50).output_len(), 8000);
        assert_eq!(EncoderParams::zeros(6, 10, 40, 50).output_len(), 4000);
    }

    #[test]
    fn encode_ignores_explicit_pad_tail() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"]);
        let table = random_init(&vocab, 3, 0.5, 6);
        let p = EncoderParams::init_uniform(2, 3, 2, 3, &mut ChaCha8Rng::seed_from_u64(6));
        let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let short = ArgumentPair::new("t", toks(&["a", "b"]), toks(&["c"]), "x");
        let padded = ArgumentPair::new(
            "t",
            toks(&["a", "b", PAD_TOKEN, PAD_TOKEN]),
            toks(&["c", PAD_TOKEN]),
            "x",
        );
        let e1 = encode(&short, &vocab, &table, &p).unwrap();
        let e2 = encode(&padded, &vocab, &table, &p).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.len(), p.output_len());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, n_p, n_f, d) = (2, 2, 2, 3);
        // one row per position so input and embedding gradients coincide
        let mut table = EmbeddingTable::zeros(14, d);
        for id in 2..14 {
            for x in table.row_mut(id) {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        let mut p = EncoderParams::init_uniform(h, n_p, n_f, d, &mut rng);
        for b in p.biases_mut().as_mut_slice() {
            *b = rng.gen_range(-0.3..0.3);
        }
        let ids1: Vec<usize> = (2..8).collect();
        let ids2: Vec<usize> = (8..14).collect();
        let probe: Vec<f64> = (0..p.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |p: &EncoderParams, t: &EmbeddingTable| {
            let (out, _) = encode_ids(p, t, &ids1, &ids2).unwrap();
            out.as_slice().iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };

        let (_, cache) = encode_ids(&p, &table, &ids1, &ids2).unwrap();
        let mut grads = EncoderGrads::zeros_like(&p);
        let mut emb = SparseRows::new();
        backward(&p, &cache, &probe, &mut grads, &mut emb);

        let step = 1e-5;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {analytic} numeric {numeric}");
        };
        for i in 0..p.filters().as_slice().len() {
            let mut q = p.clone();
            q.filters_mut().as_mut_slice()[i] += step;
            let plus = objective(&q, &table);
            q.filters_mut().as_mut_slice()[i] -= 2.0 * step;
            check(grads.filters.as_slice()[i], plus, objective(&q, &table));
        }
        for k in 0..n_f {
            let mut q = p.clone();
            q.biases_mut()[k] += step;
            let plus = objective(&q, &table);
            q.biases_mut()[k] -= 2.0 * step;
            check(grads.biases[k], plus, objective(&q, &table));
        }
        for id in 2..14 {
            for e in 0..d {
                let mut t = table.clone();
                t.row_mut(id)[e] += step;
                let plus = objective(&p, &t);
                t.row_mut(id)[e] -= 2.0 * step;
                let analytic = emb.get(id).map_or(0.0, |g| g[e]);
                check(analytic, plus, objective(&p, &t));
            }
        }
    }
}
