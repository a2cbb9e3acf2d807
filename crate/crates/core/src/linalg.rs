//! Row-major helpers for the small bond-dimension matrices that make up
//! tensor ring slices. Everything here works on plain slices so the hot
//! loops in the samplers can reuse preallocated buffers.

use serde::{Deserialize, Serialize};

/// A small dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        matmul(
            &self.data,
            &other.data,
            self.rows,
            self.cols,
            other.cols,
            &mut out.data,
        );
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }
}

/// `out = a · b` with `a` of shape m×k and `b` of shape k×n.
#[inline]
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        row.fill(0.0);
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Diagonal of `a · b` with `a` m×k and `b` k×m, written into `out[..m]`.
#[inline]
pub(crate) fn diag_of_product(a: &[f64], b: &[f64], m: usize, k: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(m) {
        let mut acc = 0.0;
        for p in 0..k {
            acc += a[i * k + p] * b[p * m + i];
        }
        *o = acc;
    }
}

/// Multiplies column `c` of a rows×cols matrix by `w[c]`.
#[inline]
pub(crate) fn scale_columns(mat: &mut [f64], rows: usize, cols: usize, w: &[f64]) {
    for r in 0..rows {
        for (x, &s) in mat[r * cols..(r + 1) * cols].iter_mut().zip(w) {
            *x *= s;
        }
    }
}

pub(crate) fn set_identity(out: &mut [f64], n: usize) {
    out[..n * n].fill(0.0);
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
}
