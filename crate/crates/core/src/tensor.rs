//! Dense `f64` arrays and the handful of kernels the network needs.
//!
//! There is no broadcasting and no strided view: a [`Vec1`] is a vector, a
//! [`Mat2`] is a row-major matrix and a [`Ten3`] is a stack of equally sized
//! matrices. Everything else is built from [`matvec`], [`tanh_map`],
//! [`softmax`] and [`window_max`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec1 {
    data: Vec<f64>,
}

impl Vec1 {
    pub fn new(data: Vec<f64>) -> Self {
        Vec1 { data }
    }

    pub fn zeros(len: usize) -> Self {
        Vec1 {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Concatenates `parts` in order.
    pub fn concat(parts: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            data.extend_from_slice(p);
        }
        Vec1 { data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry; the first one wins on exact ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for Vec1 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vec1 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for Vec1 {
    fn from(data: Vec<f64>) -> Self {
        Vec1 { data }
    }
}

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Rejected(format!(
                "matrix of shape ({rows}, {cols}) needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat2 { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Rejected("ragged rows".into()));
        }
        Ok(Mat2 {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat2::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..start + count` as one contiguous slice.
    pub fn row_block(&self, start: usize, count: usize) -> &[f64] {
        &self.data[start * self.cols..(start + count) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self^T · v`, used to push gradients back through a linear map.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec1> {
        if v.len() != self.rows {
            return Err(Error::Rejected(format!(
                "transpose_matvec: matrix has {} rows, vector has {} entries",
                self.rows,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += m * vr;
            }
        }
        Ok(Vec1::new(out))
    }

    /// `self += scale · outer(left, right)`.
    pub fn add_outer(&mut self, scale: f64, left: &[f64], right: &[f64]) {
        debug_assert_eq!(left.len(), self.rows);
        debug_assert_eq!(right.len(), self.cols);
        for (r, &l) in left.iter().enumerate() {
            let s = scale * l;
            if s == 0.0 {
                continue;
            }
            for (m, &x) in self.row_mut(r).iter_mut().zip(right) {
                *m += s * x;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Mat2 {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat2 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// A stack of `d0` matrices of shape `(d1, d2)`, stored contiguously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ten3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Ten3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Ten3 {
            dims: [d0, d1, d2],
            data: vec![0.0; d0 * d1 * d2],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Matrix `k` of the stack as a flat row-major slice.
    pub fn slab(&self, k: usize) -> &[f64] {
        let n = self.dims[1] * self.dims[2];
        &self.data[k * n..(k + 1) * n]
    }

    /// Flattens in storage order: first index outermost, last innermost.
    pub fn flatten(&self) -> Vec1 {
        Vec1::new(self.data.clone())
    }
}

impl std::ops::Index<(usize, usize, usize)> for Ten3 {
    type Output = f64;

    fn index(&self, (a, b, c): (usize, usize, usize)) -> &f64 {
        &self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }
}

impl std::ops::IndexMut<(usize, usize, usize)> for Ten3 {
    fn index_mut(&mut self, (a, b, c): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[i] = Σ_j m[i,j] · v[j]`.
pub fn matvec(m: &Mat2, v: &[f64]) -> Result<Vec1> {
    if m.cols != v.len() {
        return Err(Error::Rejected(format!(
            "matvec: matrix has {} columns, vector has {} entries",
            m.cols,
            v.len()
        )));
    }
    Ok(Vec1::new((0..m.rows).map(|r| dot(m.row(r), v)).collect()))
}

pub fn tanh_map(v: &[f64]) -> Vec1 {
    Vec1::new(v.iter().map(|x| x.tanh()).collect())
}

/// Max-shifted softmax. Panics on an empty input.
pub fn softmax(v: &[f64]) -> Vec1 {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Vec1::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Maximum over the half-open rectangle `[r0, r1) × [c0, c1)` and where it
/// was found. Ties go to the first position in row-major order.
pub fn window_max(
    m: &Mat2,
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
) -> Result<(f64, (usize, usize))> {
    if r0 >= r1 || c0 >= c1 || r1 > m.rows || c1 > m.cols {
        return Err(Error::Rejected(format!(
            "window [{r0},{r1})x[{c0},{c1}) is empty or outside a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let mut best = (m[(r0, c0)], (r0, c0));
    for r in r0..r1 {
        let row = m.row(r);
        for (c, &x) in row.iter().enumerate().take(c1).skip(c0) {
            if x > best.0 {
                best = (x, (r, c));
            }
        }
    }
    Ok(best)
}
