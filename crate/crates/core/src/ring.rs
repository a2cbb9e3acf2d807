//! Weighted tensor ring algebra.
//!
//! An order-D tensor ring holds D cores. Core `d` is a stack of `I_d` slices,
//! each an `R_{d-1} × R_d` matrix, and mode `d` carries a weight vector
//! `λ^(d)` of length `R_d` that sits on the bond between core `d` and core
//! `d+1` (indices wrap around the ring). An entry is
//!
//! ```text
//! x[i_1, ..., i_D] = tr( G1[i_1] Λ1 G2[i_2] Λ2 ... GD[i_D] ΛD )
//! ```
//!
//! `ranks[d]` is the bond dimension `R_d`, i.e. the length of `λ^(d)`. The
//! fitting engines start with a uniform rank but rank adaption may change
//! bonds independently.
//!
//! Holding everything else fixed, an entry is affine in any single weight
//! and in any single core entry; [`TRModel::weight_coefficients`] and
//! [`TRModel::core_coefficients`] expose the slopes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::Rng;

/// Default limit on the number of entries [`TRModel::reconstruct_dense`] will materialize.
pub const DEFAULT_DENSE_LIMIT: u128 = 100_000_000;

/// One core: `size` slices, each a `rows × cols` row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Core {
    size: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn zeros(size: usize, rows: usize, cols: usize) -> Self {
        Core {
            size,
            rows,
            cols,
            data: vec![0.0; size * rows * cols],
        }
    }

    pub fn from_vec(size: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * rows * cols {
            return Err(Error::input(format!(
                "core buffer has {} entries, expected {size}×{rows}×{cols}",
                data.len()
            )));
        }
        Ok(Core {
            size,
            rows,
            cols,
            data,
        })
    }

    /// Number of slices (the mode size `I_d`).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.rows * self.cols;
        &mut self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn get(&self, i: usize, r: usize, c: usize) -> f64 {
        self.data[(i * self.rows + r) * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, r: usize, c: usize, v: f64) {
        self.data[(i * self.rows + r) * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn without_col(&self, col: usize) -> Core {
        let mut data = Vec::with_capacity(self.size * self.rows * (self.cols - 1));
        for row in self.data.chunks(self.cols) {
            data.extend(
                row.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != col)
                    .map(|(_, &v)| v),
            );
        }
        Core {
            cols: self.cols - 1,
            data,
            ..*self
        }
    }

    fn without_row(&self, row: usize) -> Core {
        let mut data = Vec::with_capacity(self.size * (self.rows - 1) * self.cols);
        for (k, r) in self.data.chunks(self.cols).enumerate() {
            if k % self.rows != row {
                data.extend_from_slice(r);
            }
        }
        Core {
            rows: self.rows - 1,
            data,
            ..*self
        }
    }

    fn with_extra_col(&self, mut fill: impl FnMut() -> f64) -> Core {
        let mut data = Vec::with_capacity(self.size * self.rows * (self.cols + 1));
        for row in self.data.chunks(self.cols) {
            data.extend_from_slice(row);
            data.push(fill());
        }
        Core {
            cols: self.cols + 1,
            data,
            ..*self
        }
    }

    fn with_extra_row(&self, mut fill: impl FnMut() -> f64) -> Core {
        let mut data = Vec::with_capacity(self.size * (self.rows + 1) * self.cols);
        for slice in self.data.chunks(self.rows * self.cols) {
            data.extend_from_slice(slice);
            data.extend((0..self.cols).map(|_| fill()));
        }
        Core {
            rows: self.rows + 1,
            data,
            ..*self
        }
    }
}

/// Dense tensor in row-major order (last index fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[linear_index(&self.shape, index)]
    }
}

/// Row-major linear position of `index` in a tensor of `shape`.
pub fn linear_index(shape: &[usize], index: &[usize]) -> usize {
    index
        .iter()
        .zip(shape)
        .fold(0usize, |acc, (&i, &s)| acc * s + i)
}

/// Inverse of [`linear_index`].
pub fn unravel_index(shape: &[usize], mut pos: usize, out: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        out[d] = pos % shape[d];
        pos /= shape[d];
    }
}

/// Tensor ring with per-bond weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TRModel {
    cores: Vec<Core>,
    weights: Vec<Vec<f64>>,
}

impl TRModel {
    /// Assembles a model, checking that bond dimensions close around the ring.
    pub fn new(cores: Vec<Core>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let d = cores.len();
        if d == 0 {
            return Err(Error::input("a tensor ring needs at least one core"));
        }
        if weights.len() != d {
            return Err(Error::input(format!(
                "{d} cores but {} weight vectors",
                weights.len()
            )));
        }
        for k in 0..d {
            let next = (k + 1) % d;
            if cores[k].cols != weights[k].len() {
                return Err(Error::input(format!(
                    "core {k} has {} columns but weight vector {k} has length {}",
                    cores[k].cols,
                    weights[k].len()
                )));
            }
            if cores[k].cols != cores[next].rows {
                return Err(Error::input(format!(
                    "core {k} has {} columns but core {next} has {} rows",
                    cores[k].cols, cores[next].rows
                )));
            }
            if cores[k].cols == 0 || cores[k].size == 0 {
                return Err(Error::input(format!("core {k} is empty")));
            }
        }
        Ok(TRModel { cores, weights })
    }

    /// Uniform-rank model with i.i.d. `N(0, core_std²)` core entries and unit weights.
    pub fn random(shape: &[usize], rank: usize, core_std: f64, rng: &mut Rng) -> Result<Self> {
        let ranks = vec![rank; shape.len()];
        Self::random_with_ranks(shape, &ranks, core_std, rng)
    }

    pub fn random_with_ranks(
        shape: &[usize],
        ranks: &[usize],
        core_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if shape.len() != ranks.len() {
            return Err(Error::input("shape and ranks must have equal length"));
        }
        if ranks.contains(&0) {
            return Err(Error::input("ranks must be positive"));
        }
        let d = shape.len();
        let cores = (0..d)
            .map(|k| {
                let rows = ranks[(k + d - 1) % d];
                let cols = ranks[k];
                let data = (0..shape[k] * rows * cols)
                    .map(|_| core_std * rng.standard_normal())
                    .collect();
                Core::from_vec(shape[k], rows, cols, data)
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = ranks.iter().map(|&r| vec![1.0; r]).collect();
        TRModel::new(cores, weights)
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.size).collect()
    }

    /// Bond dimensions; `ranks()[d]` is the length of `weights()[d]`.
    pub fn ranks(&self) -> Vec<usize> {
        self.weights.iter().map(Vec::len).collect()
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, d: usize) -> &Core {
        &self.cores[d]
    }

    pub fn core_mut(&mut self, d: usize) -> &mut Core {
        &mut self.cores[d]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weight(&self, d: usize) -> &[f64] {
        &self.weights[d]
    }

    pub fn weight_mut(&mut self, d: usize) -> &mut Vec<f64> {
        &mut self.weights[d]
    }

    /// Total number of core entries plus weights.
    pub fn num_parameters(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum::<usize>()
            + self.weights.iter().map(Vec::len).sum::<usize>()
    }

    pub fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.order() {
            return Err(Error::input(format!(
                "index {index:?} has {} components, model order is {}",
                index.len(),
                self.order()
            )));
        }
        for (d, (&i, core)) in index.iter().zip(&self.cores).enumerate() {
            if i >= core.size {
                return Err(Error::input(format!(
                    "index {i} out of bounds for mode {d} of size {}",
                    core.size
                )));
            }
        }
        Ok(())
    }

    /// Value of one entry: the trace of the weighted slice product around the ring.
    pub fn eval_entry(&self, index: &[usize]) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.eval_unchecked(index))
    }

    pub(crate) fn eval_unchecked(&self, index: &[usize]) -> f64 {
        let mut scratch = ChainScratch::default();
        self.eval_with(index, &mut scratch)
    }

    pub(crate) fn eval_with(&self, index: &[usize], s: &mut ChainScratch) -> f64 {
        let first = &self.cores[0];
        let rows = first.rows;
        s.acc.clear();
        s.acc.extend_from_slice(first.slice(index[0]));
        linalg::scale_columns(&mut s.acc, rows, first.cols, &self.weights[0]);
        let mut cols = first.cols;
        for (k, core) in self.cores.iter().enumerate().skip(1) {
            s.tmp.resize(rows * core.cols, 0.0);
            linalg::matmul(
                &s.acc,
                core.slice(index[k]),
                rows,
                cols,
                core.cols,
                &mut s.tmp,
            );
            linalg::scale_columns(&mut s.tmp, rows, core.cols, &self.weights[k]);
            std::mem::swap(&mut s.acc, &mut s.tmp);
            cols = core.cols;
        }
        (0..rows).map(|r| s.acc[r * cols + r]).sum()
    }

    /// Equivalent model with every weight folded into the columns of its core.
    pub fn absorb_weights(&self) -> TRModel {
        let cores = self
            .cores
            .iter()
            .zip(&self.weights)
            .map(|(core, w)| {
                let mut c = core.clone();
                linalg::scale_columns(&mut c.data, c.size * c.rows, c.cols, w);
                c
            })
            .collect();
        let weights = self.weights.iter().map(|w| vec![1.0; w.len()]).collect();
        TRModel { cores, weights }
    }

    /// Product of the weight-absorbed slices of every mode except `mode`, taken
    /// in ring order starting at `mode + 1`. The result is `R_mode × R_{mode-1}`
    /// and satisfies `x = tr(G^(mode)[i_mode] Λ^(mode) · subchain)`.
    pub fn subchain_slice(&self, mode: usize, index: &[usize]) -> Result<Matrix> {
        self.check_index(index)?;
        if mode >= self.order() {
            return Err(Error::input(format!("mode {mode} out of range")));
        }
        let absorbed = self.absorb_weights();
        let d = self.order();
        let rows = self.weights[mode].len();
        let out_cols = self.cores[mode].rows;
        let mut out = vec![0.0; rows * out_cols];
        let mut s = ChainScratch::default();
        absorbed.subchain_into(mode, |k| index[k], &mut out, &mut s);
        debug_assert_eq!(out.len(), rows * self.cores[(mode + d - 1) % d].cols);
        Ok(Matrix::from_row_major(rows, out_cols, out))
    }

    /// Writes the product of slices `mode+1, ..., mode-1` (ring order) of `self`
    /// into `out` without absorbing weights; callers pass an absorbed model.
    pub(crate) fn subchain_into(
        &self,
        mode: usize,
        index: impl Fn(usize) -> usize,
        out: &mut [f64],
        s: &mut ChainScratch,
    ) {
        let d = self.order();
        let n = self.cores[mode].cols;
        if d == 1 {
            linalg::set_identity(out, n);
            return;
        }
        let k0 = (mode + 1) % d;
        s.acc.clear();
        s.acc.extend_from_slice(self.cores[k0].slice(index(k0)));
        let mut cols = self.cores[k0].cols;
        for step in 2..d {
            let k = (mode + step) % d;
            let core = &self.cores[k];
            s.tmp.resize(n * core.cols, 0.0);
            linalg::matmul(&s.acc, core.slice(index(k)), n, cols, core.cols, &mut s.tmp);
            std::mem::swap(&mut s.acc, &mut s.tmp);
            cols = core.cols;
        }
        out[..n * cols].copy_from_slice(&s.acc[..n * cols]);
    }

    /// Slopes `a^r = (S · G^(mode)[i_mode])_{rr}` of the entry with respect to
    /// each weight `λ^(mode)_r`, where `S` is the subchain. The intercept for
    /// weight `r` is `x − a^r λ_r`.
    pub fn weight_coefficients(&self, mode: usize, index: &[usize]) -> Result<Vec<f64>> {
        let s = self.subchain_slice(mode, index)?;
        let core = &self.cores[mode];
        let r = self.weights[mode].len();
        let mut out = vec![0.0; r];
        linalg::diag_of_product(
            s.as_slice(),
            core.slice(index[mode]),
            r,
            core.rows,
            &mut out,
        );
        Ok(out)
    }

    /// Slopes `c[j][k] = λ_k S[k][j]` of the entry with respect to each entry
    /// `G^(mode)[i_mode][j][k]` of the active slice.
    pub fn core_coefficients(&self, mode: usize, index: &[usize]) -> Result<Matrix> {
        let s = self.subchain_slice(mode, index)?;
        let core = &self.cores[mode];
        let w = &self.weights[mode];
        let mut c = Matrix::zeros(core.rows, core.cols);
        let mut data = c.as_slice().to_vec();
        for j in 0..core.rows {
            for k in 0..core.cols {
                data[j * core.cols + k] = w[k] * s.get(k, j);
            }
        }
        c = Matrix::from_row_major(core.rows, core.cols, data);
        Ok(c)
    }

    /// Full tensor. Fails with a capacity error above `limit` entries.
    pub fn reconstruct_dense(&self, limit: u128) -> Result<DenseTensor> {
        let shape = self.shape();
        let total: u128 = shape.iter().map(|&s| s as u128).product();
        if total > limit {
            return Err(Error::Capacity {
                requested: total,
                limit,
            });
        }
        let total = total as usize;
        let mut data = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        let mut s = ChainScratch::default();
        for pos in 0..total {
            unravel_index(&shape, pos, &mut idx);
            data.push(self.eval_with(&idx, &mut s));
        }
        Ok(DenseTensor { shape, data })
    }

    /// Appends one factor to bond `mode`: a new column on every slice of core
    /// `mode`, a new row on every slice of core `mode + 1`, both drawn
    /// `N(0, init_scale²)`, and weight `new_weight`.
    pub fn grow_rank(
        &self,
        mode: usize,
        init_scale: f64,
        new_weight: f64,
        rng: &mut Rng,
    ) -> Result<TRModel> {
        if mode >= self.order() {
            return Err(Error::input(format!("mode {mode} out of range")));
        }
        if !(init_scale > 0.0) {
            return Err(Error::input("init_scale must be positive"));
        }
        let d = self.order();
        let next = (mode + 1) % d;
        let mut out = self.clone();
        let mut draw = || init_scale * rng.standard_normal();
        if d == 1 {
            // The single core touches the bond on both sides.
            let grown = out.cores[0].with_extra_col(&mut draw);
            out.cores[0] = grown.with_extra_row(&mut draw);
        } else {
            out.cores[mode] = out.cores[mode].with_extra_col(&mut draw);
            out.cores[next] = out.cores[next].with_extra_row(&mut draw);
        }
        out.weights[mode].push(new_weight);
        Ok(out)
    }

    /// Removes factor `factor` from bond `mode`: column `factor` of core
    /// `mode`, row `factor` of core `mode + 1` and the matching weight.
    pub fn prune_rank(&self, mode: usize, factor: usize) -> Result<TRModel> {
        if mode >= self.order() {
            return Err(Error::input(format!("mode {mode} out of range")));
        }
        let r = self.weights[mode].len();
        if r <= 1 {
            return Err(Error::input(format!(
                "cannot prune bond {mode}: rank is already 1"
            )));
        }
        if factor >= r {
            return Err(Error::input(format!(
                "factor {factor} out of range for bond {mode} of rank {r}"
            )));
        }
        let d = self.order();
        let next = (mode + 1) % d;
        let mut out = self.clone();
        if d == 1 {
            out.cores[0] = out.cores[0].without_col(factor).without_row(factor);
        } else {
            out.cores[mode] = out.cores[mode].without_col(factor);
            out.cores[next] = out.cores[next].without_row(factor);
        }
        out.weights[mode].remove(factor);
        Ok(out)
    }

    /// Re-expresses bond `mode` in canonical form without changing any
    /// entry: the columns of core `mode` and the rows of core `mode + 1` on
    /// that bond become orthogonal with norm `core_scale` per entry on
    /// average, and the weights become the singular values of the bond,
    /// sorted by decreasing magnitude. Returns `None` when the bond is
    /// wider than one of its unfoldings, or the ring has a single core.
    pub fn canonicalize_bond(&self, mode: usize, core_scale: f64) -> Result<Option<TRModel>> {
        if mode >= self.order() {
            return Err(Error::input(format!("mode {mode} out of range")));
        }
        if !(core_scale > 0.0) {
            return Err(Error::input("core_scale must be positive"));
        }
        let d = self.order();
        if d == 1 {
            return Ok(None);
        }
        let next = (mode + 1) % d;
        let (left, right) = (&self.cores[mode], &self.cores[next]);
        let r = self.weights[mode].len();
        let m = left.size * left.rows;
        let n = right.size * right.cols;
        if m < r || n < r {
            return Ok(None);
        }
        // Left unfolding (I_d R_{d-1}) × R is the core's row-major layout.
        let a = DMatrix::from_row_slice(m, r, &left.data);
        // Right unfolding transposed: (I_{d+1} R_{d+1}) × R.
        let bt = DMatrix::from_fn(n, r, |row, k| {
            let (i, c) = (row / right.cols, row % right.cols);
            right.data[(i * right.rows + k) * right.cols + c]
        });
        let (qa, ra) = a.qr().unpack();
        let (qb, rb) = bt.qr().unpack();
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights[mode]));
        let svd = (ra * lambda * rb.transpose()).svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Numerical("bond SVD did not converge".into())),
        };
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
        let (ca, cb) = (
            core_scale * (m as f64).sqrt(),
            core_scale * (n as f64).sqrt(),
        );
        let new_a = qa * u.select_columns(&order) * ca;
        let new_bt = qb * v_t.select_rows(&order).transpose() * cb;

        let mut out = self.clone();
        let core = &mut out.cores[mode];
        for row in 0..m {
            for k in 0..r {
                core.data[row * r + k] = new_a[(row, k)];
            }
        }
        let core = &mut out.cores[next];
        for row in 0..n {
            let (i, c) = (row / core.cols, row % core.cols);
            for k in 0..r {
                core.data[(i * core.rows + k) * core.cols + c] = new_bt[(row, k)];
            }
        }
        out.weights[mode] = order
            .iter()
            .map(|&k| svd.singular_values[k] / (ca * cb))
            .collect();
        Ok(Some(out))
    }
}

/// Reusable buffers for chain products.
#[derive(Default, Clone, Debug)]
pub(crate) struct ChainScratch {
    acc: Vec<f64>,
    tmp: Vec<f64>,
}
