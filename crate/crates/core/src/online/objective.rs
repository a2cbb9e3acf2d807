//! Free energy of the online variational EM and its gradient in the cores
//! and weights.
//!
//! The gradient uses the affine structure of an entry: with prefix and
//! suffix products of the weight-absorbed slices, the subchain of every
//! mode costs one extra product, so an entry's full sensitivity vector costs
//! `O(D R³)`.

use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::VariationalState;
use crate::linalg;
use crate::ring::TRModel;
use crate::tensor::{DataKind, SparseTensor};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gradient of the free energy, laid out like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub cores: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(model: &TRModel) -> Self {
        Gradient {
            cores: model
                .cores()
                .iter()
                .map(|c| vec![0.0; c.as_slice().len()])
                .collect(),
            weights: model.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.cores
            .iter()
            .flatten()
            .chain(self.weights.iter().flatten())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Offsets of the per-mode blocks in an entry's sensitivity vector.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    core_offsets: Vec<usize>,
    weight_offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(model: &TRModel) -> Self {
        let mut core_offsets = Vec::new();
        let mut weight_offsets = Vec::new();
        let mut len = 0;
        for c in model.cores() {
            core_offsets.push(len);
            len += c.rows() * c.cols();
        }
        for w in model.weights() {
            weight_offsets.push(len);
            len += w.len();
        }
        Layout {
            core_offsets,
            weight_offsets,
            len,
        }
    }
}

#[derive(Default)]
struct Scratch {
    prefix: Vec<Vec<f64>>,
    suffix: Vec<Vec<f64>>,
    sub: Vec<f64>,
}

/// Entry value and its partial derivatives with respect to the active slice
/// of every core and every weight, written into `out` per `layout`.
fn entry_sensitivities(
    model: &TRModel,
    absorbed: &TRModel,
    layout: &Layout,
    index: &[usize],
    out: &mut [f64],
    s: &mut Scratch,
) -> f64 {
    let d = model.order();
    let edge = model.core(0).rows();
    s.prefix.resize(d, Vec::new());
    s.suffix.resize(d + 1, Vec::new());

    // prefix[k] = A_0 ... A_k (edge × R_k)
    for k in 0..d {
        let core = absorbed.core(k);
        let slice = core.slice(index[k]);
        let (head, tail) = s.prefix.split_at_mut(k);
        let dst = &mut tail[0];
        dst.resize(edge * core.cols(), 0.0);
        if k == 0 {
            dst.copy_from_slice(slice);
        } else {
            linalg::matmul(&head[k - 1], slice, edge, core.rows(), core.cols(), dst);
        }
    }
    // suffix[k] = A_k ... A_{D-1} (R_{k-1} × edge); suffix[D] = I
    s.suffix[d].resize(edge * edge, 0.0);
    linalg::set_identity(&mut s.suffix[d], edge);
    for k in (0..d).rev() {
        let core = absorbed.core(k);
        let slice = core.slice(index[k]);
        let (head, tail) = s.suffix.split_at_mut(k + 1);
        let dst = &mut head[k];
        dst.resize(core.rows() * edge, 0.0);
        linalg::matmul(slice, &tail[0], core.rows(), core.cols(), edge, dst);
    }
    let x = (0..edge).map(|r| s.prefix[d - 1][r * edge + r]).sum();

    for k in 0..d {
        let core = model.core(k);
        let (rows, cols) = (core.rows(), core.cols());
        // Subchain S_k = suffix[k+1] · prefix[k-1], cols × rows.
        s.sub.resize(cols * rows, 0.0);
        if k == 0 {
            s.sub.copy_from_slice(&s.suffix[1][..cols * rows]);
        } else {
            linalg::matmul(
                &s.suffix[k + 1],
                &s.prefix[k - 1],
                cols,
                edge,
                rows,
                &mut s.sub,
            );
        }
        let lam = model.weight(k);
        let dc = &mut out[layout.core_offsets[k]..layout.core_offsets[k] + rows * cols];
        for j in 0..rows {
            for c in 0..cols {
                dc[j * cols + c] = lam[c] * s.sub[c * rows + j];
            }
        }
        let dw = &mut out[layout.weight_offsets[k]..layout.weight_offsets[k] + cols];
        linalg::diag_of_product(&s.sub, core.slice(index[k]), cols, rows, dw);
    }
    x
}

/// Entry values and sensitivities for every listed observation.
pub(crate) fn batch_sensitivities(
    model: &TRModel,
    data: &SparseTensor,
    batch: &[usize],
    parallel: bool,
) -> (Vec<f64>, Vec<f64>, Layout) {
    let absorbed = model.absorb_weights();
    let layout = Layout::new(model);
    let width = layout.len;
    let mut xs = vec![0.0; batch.len()];
    let mut sens = vec![0.0; batch.len() * width];
    const CHUNK: usize = 64;
    let work = |(xc, sc): (&mut [f64], &mut [f64]), start: usize| {
        let mut s = Scratch::default();
        for (k, (x, out)) in xc.iter_mut().zip(sc.chunks_mut(width)).enumerate() {
            let n = batch[start + k];
            *x = entry_sensitivities(model, &absorbed, &layout, data.index(n), out, &mut s);
        }
    };
    if parallel {
        xs.par_chunks_mut(CHUNK)
            .zip(sens.par_chunks_mut(CHUNK * width))
            .enumerate()
            .for_each(|(c, pair)| work(pair, c * CHUNK));
    } else {
        xs.chunks_mut(CHUNK)
            .zip(sens.chunks_mut(CHUNK * width))
            .enumerate()
            .for_each(|(c, pair)| work(pair, c * CHUNK));
    }
    (xs, sens, layout)
}

/// Expected log-likelihood of one observation, up to terms constant in the
/// model, and its derivative in the latent value.
fn data_term(kind: DataKind, y: f64, x: f64, e_omega: f64, state: &VariationalState) -> (f64, f64) {
    match kind {
        DataKind::Binary => (
            (y - 0.5) * x - 0.5 * e_omega * x * x,
            (y - 0.5) - e_omega * x,
        ),
        DataKind::Continuous => {
            let (e_tau, e_log_tau) = (state.e_tau(), state.e_log_tau());
            let r = y - x;
            (
                0.5 * e_log_tau - 0.5 * LN_2PI - 0.5 * e_tau * r * r,
                e_tau * r,
            )
        }
    }
}

/// Prior part of the free energy: cores, weights, `δ` and (for continuous
/// data) `τ`.
pub fn prior_terms(model: &TRModel, state: &VariationalState, psi: f64) -> f64 {
    let mut total = 0.0;
    let core_norm = 0.5 * psi.ln() - 0.5 * LN_2PI;
    for c in model.cores() {
        total += c
            .as_slice()
            .iter()
            .map(|g| core_norm - 0.5 * psi * g * g)
            .sum::<f64>();
    }
    let a0 = state.a0;
    for (d, w) in model.weights().iter().enumerate() {
        let mut e_log_phi = 0.0;
        let mut e_phi = 1.0;
        for (r, &lam) in w.iter().enumerate() {
            let (shape, rate) = (state.delta_shape[d][r], state.delta_rate[d][r]);
            let e_log_delta = digamma(shape) - rate.ln();
            let e_delta = shape / rate;
            e_log_phi += e_log_delta;
            e_phi *= e_delta;
            total += 0.5 * e_log_phi - 0.5 * LN_2PI - 0.5 * e_phi * lam * lam;
            total += (a0 - 1.0) * e_log_delta - e_delta - ln_gamma(a0);
        }
    }
    if state.kind == DataKind::Continuous {
        let (alpha0, beta0) = (state.alpha0, state.beta0);
        total += (alpha0 - 1.0) * state.e_log_tau() - beta0 * state.e_tau() + alpha0 * beta0.ln()
            - ln_gamma(alpha0);
    }
    total
}

/// Gradient of [`prior_terms`] in the cores and weights.
pub fn prior_gradient(model: &TRModel, state: &VariationalState, psi: f64, grad: &mut Gradient) {
    for (g, c) in grad.cores.iter_mut().zip(model.cores()) {
        for (g, &v) in g.iter_mut().zip(c.as_slice()) {
            *g -= psi * v;
        }
    }
    for (d, (g, w)) in grad.weights.iter_mut().zip(model.weights()).enumerate() {
        let e_phi = state.expected_phi(d);
        for ((g, &lam), phi) in g.iter_mut().zip(w).zip(e_phi) {
            *g -= phi * lam;
        }
    }
}

/// Mini-batch estimate of the free energy. `batch` lists observation
/// positions, `e_omega` holds their expected Pólya-Gamma values (binary
/// data), and `scale` multiplies the data term, normally `|Ω| / |batch|`.
pub fn free_energy(
    model: &TRModel,
    data: &SparseTensor,
    batch: &[usize],
    e_omega: &[f64],
    state: &VariationalState,
    scale: f64,
    psi: f64,
) -> f64 {
    let xs = crate::gibbs::predict_mean(std::slice::from_ref(model), &data.select(batch))
        .expect("model and data shapes agree");
    let data_sum: f64 = batch
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            data_term(
                data.kind(),
                data.value(n),
                xs[k],
                omega_at(e_omega, k),
                state,
            )
            .0
        })
        .sum();
    scale * data_sum + prior_terms(model, state, psi)
}

fn omega_at(e_omega: &[f64], k: usize) -> f64 {
    e_omega.get(k).copied().unwrap_or(0.0)
}

/// Free energy and its gradient, data term only (no prior), scaled by `scale`.
pub fn data_term_gradient(
    model: &TRModel,
    data: &SparseTensor,
    batch: &[usize],
    e_omega: &[f64],
    state: &VariationalState,
    scale: f64,
    parallel: bool,
) -> (f64, Gradient) {
    let (xs, sens, layout) = batch_sensitivities(model, data, batch, parallel);
    let mut grad = Gradient::zeros_like(model);
    let mut value = 0.0;
    let width = layout.len;
    for (k, &n) in batch.iter().enumerate() {
        let (v, dv) = data_term(
            data.kind(),
            data.value(n),
            xs[k],
            omega_at(e_omega, k),
            state,
        );
        value += v;
        let w = scale * dv;
        let s = &sens[k * width..(k + 1) * width];
        let index = data.index(n);
        for (d, g) in grad.cores.iter_mut().enumerate() {
            let core = model.core(d);
            let stride = core.rows() * core.cols();
            let off = layout.core_offsets[d];
            let dst = &mut g[index[d] * stride..(index[d] + 1) * stride];
            for (o, &c) in dst.iter_mut().zip(&s[off..off + stride]) {
                *o += w * c;
            }
        }
        for (d, g) in grad.weights.iter_mut().enumerate() {
            let off = layout.weight_offsets[d];
            let len = g.len();
            for (o, &a) in g.iter_mut().zip(&s[off..off + len]) {
                *o += w * a;
            }
        }
    }
    (scale * value, grad)
}

/// Mini-batch free energy and its full gradient.
#[allow(clippy::too_many_arguments)]
pub fn free_energy_gradient(
    model: &TRModel,
    data: &SparseTensor,
    batch: &[usize],
    e_omega: &[f64],
    state: &VariationalState,
    scale: f64,
    psi: f64,
    parallel: bool,
) -> (f64, Gradient) {
    let (value, mut grad) = data_term_gradient(model, data, batch, e_omega, state, scale, parallel);
    prior_gradient(model, state, psi, &mut grad);
    (value + prior_terms(model, state, psi), grad)
}
