//! Full conditional updates for one Gibbs sweep.
//!
//! Every observation contributes a Gaussian pseudo-likelihood in its latent
//! value `x_n`: `exp(h_n x_n − w_n x_n² / 2)`. For continuous data
//! `w_n = τ, h_n = τ y_n`; for binary data with Pólya-Gamma augmentation
//! `w_n = ω_n, h_n = y_n − 1/2`. The weight and core conditionals below are
//! written once against `(w, h)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mgp::{delta_conditional, MgpState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ring::{ChainScratch, TRModel};
use crate::rng::{fill_pg, sample_gamma, sample_normal, Rng};
use crate::tensor::{DataKind, SparseTensor};

/// Observation-level auxiliary state: the noise precision for continuous
/// data or one Pólya-Gamma variable per observation for binary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    Continuous { tau: f64 },
    Binary { omega: Vec<f64> },
}

impl Augmentation {
    pub fn kind(&self) -> DataKind {
        match self {
            Augmentation::Continuous { .. } => DataKind::Continuous,
            Augmentation::Binary { .. } => DataKind::Binary,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Augmentation::Continuous { tau } => Some(*tau),
            Augmentation::Binary { .. } => None,
        }
    }

    pub(crate) fn check(&self, data: &SparseTensor) -> Result<()> {
        match self {
            Augmentation::Continuous { tau } => {
                if data.kind() != DataKind::Continuous {
                    return Err(Error::Mode {
                        op: "continuous augmentation",
                        kind: "binary",
                    });
                }
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::input("tau must be positive"));
                }
            }
            Augmentation::Binary { omega } => {
                if data.kind() != DataKind::Binary {
                    return Err(Error::Mode {
                        op: "binary augmentation",
                        kind: "continuous",
                    });
                }
                if omega.len() != data.len() {
                    return Err(Error::input(format!(
                        "{} omegas for {} observations",
                        omega.len(),
                        data.len()
                    )));
                }
            }
        }
        Ok(())
    }

    fn weight(&self, n: usize) -> f64 {
        match self {
            Augmentation::Continuous { tau } => *tau,
            Augmentation::Binary { omega } => omega[n],
        }
    }

    fn target(&self, y: f64) -> f64 {
        match self {
            Augmentation::Continuous { tau } => tau * y,
            Augmentation::Binary { .. } => y - 0.5,
        }
    }
}

/// Scratch buffers reused across sweeps.
#[derive(Default, Clone, Debug)]
pub(crate) struct Workspace {
    /// Current latent value of every observation.
    pub latent: Vec<f64>,
    subchains: Vec<f64>,
    coeffs: Vec<f64>,
    slice_prec: Vec<f64>,
    slice_lin: Vec<f64>,
    slice_old: Vec<f64>,
}

const CHAIN_CHUNK: usize = 256;

/// Subchain of every observation for `mode`, row-major `R_mode × R_{mode-1}`.
fn compute_subchains(
    absorbed: &TRModel,
    data: &SparseTensor,
    mode: usize,
    out: &mut Vec<f64>,
    parallel: bool,
) {
    let d = absorbed.order();
    let stride = absorbed.core(mode).cols() * absorbed.core(mode).rows();
    out.resize(data.len() * stride, 0.0);
    let idx = data.flat_indices();
    let fill = |(chunk_no, chunk): (usize, &mut [f64])| {
        let mut scratch = ChainScratch::default();
        for (k, dst) in chunk.chunks_mut(stride).enumerate() {
            let n = chunk_no * CHAIN_CHUNK + k;
            let index = &idx[n * d..(n + 1) * d];
            absorbed.subchain_into(mode, |m| index[m], dst, &mut scratch);
        }
    };
    if parallel {
        out.par_chunks_mut(CHAIN_CHUNK * stride)
            .enumerate()
            .for_each(fill);
    } else {
        out.chunks_mut(CHAIN_CHUNK * stride)
            .enumerate()
            .for_each(fill);
    }
}

/// Redraws every weight of bond `mode` from its Gaussian conditional.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_weights_mode(
    model: &mut TRModel,
    mgp: &MgpState,
    aug: &Augmentation,
    data: &SparseTensor,
    mode: usize,
    ws: &mut Workspace,
    parallel: bool,
    rng: &mut Rng,
) -> Result<()> {
    let absorbed = model.absorb_weights();
    compute_subchains(&absorbed, data, mode, &mut ws.subchains, parallel);
    let core = model.core(mode);
    let (rows, cols) = (core.rows(), core.cols());
    let stride = rows * cols;
    let lam = model.weight(mode).to_vec();

    ws.coeffs.resize(data.len() * cols, 0.0);
    ws.latent.resize(data.len(), 0.0);
    for n in 0..data.len() {
        let i = data.index(n)[mode];
        let a = &mut ws.coeffs[n * cols..(n + 1) * cols];
        linalg::diag_of_product(
            &ws.subchains[n * stride..(n + 1) * stride],
            core.slice(i),
            cols,
            rows,
            a,
        );
        ws.latent[n] = a.iter().zip(&lam).map(|(a, l)| a * l).sum();
    }

    let phi = &mgp.phi()[mode];
    for (r, &phi_r) in phi.iter().enumerate().take(cols) {
        let old = model.weight(mode)[r];
        let mut prec = phi_r;
        let mut lin = 0.0;
        for n in 0..data.len() {
            let a = ws.coeffs[n * cols + r];
            let w = aug.weight(n);
            prec += w * a * a;
            lin += a * (aug.target(data.value(n)) - w * (ws.latent[n] - a * old));
        }
        let new = sample_normal(rng, lin / prec, prec)?;
        model.weight_mut(mode)[r] = new;
        let delta = new - old;
        for n in 0..data.len() {
            ws.latent[n] += ws.coeffs[n * cols + r] * delta;
        }
    }
    Ok(())
}

/// Redraws every entry of core `mode`. Entries sharing a bond position
/// `(j, k)` are drawn jointly across slices; their conditional covariance
/// is diagonal because each observation touches exactly one slice.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_core_mode(
    model: &mut TRModel,
    psi: f64,
    aug: &Augmentation,
    data: &SparseTensor,
    mode: usize,
    ws: &mut Workspace,
    parallel: bool,
    rng: &mut Rng,
) -> Result<()> {
    let absorbed = model.absorb_weights();
    compute_subchains(&absorbed, data, mode, &mut ws.subchains, parallel);
    let (size, rows, cols) = {
        let c = model.core(mode);
        (c.size(), c.rows(), c.cols())
    };
    let stride = rows * cols;
    let lam = model.weight(mode).to_vec();

    // coeffs[n][j][k] = λ_k S_n[k][j]
    ws.coeffs.resize(data.len() * stride, 0.0);
    ws.latent.resize(data.len(), 0.0);
    {
        let core = model.core(mode);
        for n in 0..data.len() {
            let s = &ws.subchains[n * stride..(n + 1) * stride];
            let c = &mut ws.coeffs[n * stride..(n + 1) * stride];
            for j in 0..rows {
                for k in 0..cols {
                    c[j * cols + k] = lam[k] * s[k * rows + j];
                }
            }
            let g = core.slice(data.index(n)[mode]);
            ws.latent[n] = c.iter().zip(g).map(|(c, g)| c * g).sum();
        }
    }

    ws.slice_prec.resize(size, 0.0);
    ws.slice_lin.resize(size, 0.0);
    ws.slice_old.resize(size, 0.0);
    for j in 0..rows {
        for k in 0..cols {
            let e = j * cols + k;
            ws.slice_prec.fill(psi);
            ws.slice_lin.fill(0.0);
            let core = model.core_mut(mode);
            for i in 0..size {
                ws.slice_old[i] = core.get(i, j, k);
            }
            for n in 0..data.len() {
                let i = data.index(n)[mode];
                let c = ws.coeffs[n * stride + e];
                let w = aug.weight(n);
                ws.slice_prec[i] += w * c * c;
                ws.slice_lin[i] +=
                    c * (aug.target(data.value(n)) - w * (ws.latent[n] - c * ws.slice_old[i]));
            }
            for i in 0..size {
                let prec = ws.slice_prec[i];
                let g = sample_normal(rng, ws.slice_lin[i] / prec, prec)?;
                core.set(i, j, k, g);
            }
            for n in 0..data.len() {
                let i = data.index(n)[mode];
                let c = ws.coeffs[n * stride + e];
                ws.latent[n] += c * (core.get(i, j, k) - ws.slice_old[i]);
            }
        }
    }
    Ok(())
}

/// Redraws every `δ` in place, sweeping factors in order within each bond.
pub(crate) fn update_delta(
    mgp: &mut MgpState,
    model: &TRModel,
    a0: f64,
    rng: &mut Rng,
) -> Result<()> {
    for d in 0..model.order() {
        let weights = model.weight(d);
        for r in 0..weights.len() {
            let (shape, rate) = delta_conditional(a0, weights, &mgp.delta()[d], r);
            let v = sample_gamma(rng, shape, rate)?;
            mgp.set_delta(d, r, v);
        }
    }
    Ok(())
}

/// Latent value of every observation under `model`.
pub(crate) fn latent_values(model: &TRModel, data: &SparseTensor, parallel: bool) -> Vec<f64> {
    let d = data.order();
    let idx = data.flat_indices();
    let eval = |n: usize| {
        let mut s = ChainScratch::default();
        model.eval_with(&idx[n * d..(n + 1) * d], &mut s)
    };
    if parallel {
        (0..data.len()).into_par_iter().map(eval).collect()
    } else {
        (0..data.len()).map(eval).collect()
    }
}

pub(crate) fn residual_sum_of_squares(data: &SparseTensor, latent: &[f64]) -> f64 {
    data.values()
        .iter()
        .zip(latent)
        .map(|(y, x)| (y - x) * (y - x))
        .sum()
}

pub(crate) fn draw_tau(
    data: &SparseTensor,
    latent: &[f64],
    alpha0: f64,
    beta0: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let shape = alpha0 + 0.5 * data.len() as f64;
    let rate = beta0 + 0.5 * residual_sum_of_squares(data, latent);
    sample_gamma(rng, shape, rate)
}

fn check_model(model: &TRModel, data: &SparseTensor) -> Result<()> {
    if model.shape() != data.shape() {
        return Err(Error::input(format!(
            "model shape {:?} does not match data shape {:?}",
            model.shape(),
            data.shape()
        )));
    }
    Ok(())
}

fn check_mgp(mgp: &MgpState, model: &TRModel) -> Result<()> {
    if mgp.ranks() != model.ranks() {
        return Err(Error::input(format!(
            "shrinkage state ranks {:?} do not match model ranks {:?}",
            mgp.ranks(),
            model.ranks()
        )));
    }
    Ok(())
}

/// Draws a new shrinkage state given the model's weights.
pub fn sample_delta(mgp: &MgpState, model: &TRModel, a0: f64, rng: &mut Rng) -> Result<MgpState> {
    check_mgp(mgp, model)?;
    let mut out = mgp.clone();
    update_delta(&mut out, model, a0, rng)?;
    Ok(out)
}

/// Draws new weights for every bond, bond by bond.
pub fn sample_lambda(
    model: &TRModel,
    mgp: &MgpState,
    aug: &Augmentation,
    data: &SparseTensor,
    rng: &mut Rng,
) -> Result<TRModel> {
    check_model(model, data)?;
    check_mgp(mgp, model)?;
    aug.check(data)?;
    let mut out = model.clone();
    let mut ws = Workspace::default();
    for d in 0..out.order() {
        update_weights_mode(&mut out, mgp, aug, data, d, &mut ws, false, rng)?;
    }
    Ok(out)
}

/// Draws new cores, core by core, under the `N(0, 1/psi)` prior.
pub fn sample_cores(
    model: &TRModel,
    psi: f64,
    aug: &Augmentation,
    data: &SparseTensor,
    rng: &mut Rng,
) -> Result<TRModel> {
    check_model(model, data)?;
    aug.check(data)?;
    if !(psi > 0.0) {
        return Err(Error::input("psi must be positive"));
    }
    let mut out = model.clone();
    let mut ws = Workspace::default();
    for d in 0..out.order() {
        update_core_mode(&mut out, psi, aug, data, d, &mut ws, false, rng)?;
    }
    Ok(out)
}

/// Draws the noise precision of continuous data.
pub fn sample_tau(
    model: &TRModel,
    data: &SparseTensor,
    alpha0: f64,
    beta0: f64,
    rng: &mut Rng,
) -> Result<Augmentation> {
    if data.kind() != DataKind::Continuous {
        return Err(Error::Mode {
            op: "sample_tau",
            kind: "binary",
        });
    }
    check_model(model, data)?;
    let latent = latent_values(model, data, false);
    Ok(Augmentation::Continuous {
        tau: draw_tau(data, &latent, alpha0, beta0, rng)?,
    })
}

/// Draws one Pólya-Gamma variable per binary observation.
pub fn sample_omega(model: &TRModel, data: &SparseTensor, rng: &mut Rng) -> Result<Augmentation> {
    if data.kind() != DataKind::Binary {
        return Err(Error::Mode {
            op: "sample_omega",
            kind: "continuous",
        });
    }
    check_model(model, data)?;
    let latent = latent_values(model, data, false);
    let mut omega = vec![0.0; data.len()];
    fill_pg(rng, &latent, &mut omega, false)?;
    Ok(Augmentation::Binary { omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::Core;

    fn scalar_model(order: usize, weight0: f64) -> TRModel {
        let cores = (0..order)
            .map(|_| Core::from_vec(1, 1, 1, vec![1.0]).unwrap())
            .collect();
        let mut weights = vec![vec![1.0]; order];
        weights[0][0] = weight0;
        TRModel::new(cores, weights).unwrap()
    }

    #[test]
    fn mode_errors() {
        let model = scalar_model(3, 1.0);
        let cont = SparseTensor::new(
            vec![1, 1, 1],
            vec![(vec![0, 0, 0], 0.3)],
            DataKind::Continuous,
        )
        .unwrap();
        let bin =
            SparseTensor::new(vec![1, 1, 1], vec![(vec![0, 0, 0], 1.0)], DataKind::Binary).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        assert!(matches!(
            sample_tau(&model, &bin, 1.0, 1.0, &mut rng),
            Err(Error::Mode { .. })
        ));
        assert!(matches!(
            sample_omega(&model, &cont, &mut rng),
            Err(Error::Mode { .. })
        ));
        let omega = sample_omega(&model, &bin, &mut rng).unwrap();
        match omega {
            Augmentation::Binary { omega } => assert!(omega.len() == 1 && omega[0] > 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn scalar_weight_posterior_mean() {
        // x = λ, y = 0.8, τ = 1, φ = 1 → λ | y ~ N(0.4, 1/2)
        let model = scalar_model(3, 0.0);
        let data = SparseTensor::new(
            vec![1, 1, 1],
            vec![(vec![0, 0, 0], 0.8)],
            DataKind::Continuous,
        )
        .unwrap();
        let mgp = MgpState::new(vec![vec![1.0]; 3]).unwrap();
        let aug = Augmentation::Continuous { tau: 1.0 };
        let mut rng = Rng::seed_from_u64(2);
        let mut ws = Workspace::default();
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let mut m = model.clone();
            update_weights_mode(&mut m, &mgp, &aug, &data, 0, &mut ws, false, &mut rng).unwrap();
            let v = m.weight(0)[0];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((mean - 0.4).abs() < 4.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 0.03);
    }

    #[test]
    fn unobserved_slice_follows_prior() {
        // Two slices, only slice 0 observed.
        let cores = vec![
            Core::from_vec(2, 1, 1, vec![1.0, 1.0]).unwrap(),
            Core::from_vec(1, 1, 1, vec![1.0]).unwrap(),
        ];
        let model = TRModel::new(cores, vec![vec![1.0], vec![1.0]]).unwrap();
        let data =
            SparseTensor::new(vec![2, 1], vec![(vec![0, 0], 5.0)], DataKind::Continuous).unwrap();
        let aug = Augmentation::Continuous { tau: 100.0 };
        let mut rng = Rng::seed_from_u64(3);
        let n = 20_000;
        let (mut s0, mut s1, mut q1) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let m = sample_cores(&model, 4.0, &aug, &data, &mut rng).unwrap();
            s0 += m.core(0).get(0, 0, 0);
            let v = m.core(0).get(1, 0, 0);
            s1 += v;
            q1 += v * v;
        }
        let n = n as f64;
        // Slice 1 is untouched by data: N(0, 1/4)
        assert!((s1 / n).abs() < 4.0 * (0.25 / n).sqrt());
        assert!((q1 / n - 0.25).abs() < 0.02);
        // Slice 0 of core 0 is drawn first with core 1 still at 1:
        // posterior mean 100·5/(4+100)
        assert!((s0 / n - 500.0 / 104.0).abs() < 0.01);
    }

    #[test]
    fn tau_rate_formula() {
        let model = scalar_model(2, 1.0);
        let data =
            SparseTensor::new(vec![1, 1], vec![(vec![0, 0], 3.0)], DataKind::Continuous).unwrap();
        let latent = latent_values(&model, &data, false);
        assert_eq!(residual_sum_of_squares(&data, &latent), 4.0);
        // Same stream: draw_tau equals a direct Gamma draw with rate β0 + S/2.
        let a = draw_tau(&data, &latent, 1.0, 0.3, &mut Rng::seed_from_u64(4)).unwrap();
        let b = sample_gamma(&mut Rng::seed_from_u64(4), 1.5, 0.3 + 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_give_prior_delta() {
        let mut model = scalar_model(1, 0.0);
        let grown = model
            .grow_rank(0, 1.0, 0.0, &mut Rng::seed_from_u64(5))
            .unwrap();
        model = grown;
        let mgp = MgpState::new(vec![vec![1.0, 1.0]]).unwrap();
        let mut rng = Rng::seed_from_u64(6);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let s = sample_delta(&mgp, &model, 2.0, &mut rng).unwrap();
            sums[0] += s.delta()[0][0];
            sums[1] += s.delta()[0][1];
        }
        assert!((sums[0] / n as f64 / 3.0 - 1.0).abs() < 0.01);
        assert!((sums[1] / n as f64 / 2.5 - 1.0).abs() < 0.01);
    }
}
