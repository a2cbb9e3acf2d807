//! Online variational EM. The E-step sets closed-form expectations of the
//! shrinkage variables `δ`, the Pólya-Gamma variables `ω` (binary data) and
//! the noise precision `τ` (continuous data); the M-step takes one adaptive
//! gradient ascent step on the mini-batch free energy in the cores and
//! weights. The rank is fixed.

mod objective;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

pub use objective::{
    data_term_gradient, free_energy, free_energy_gradient, prior_gradient, prior_terms, Gradient,
};

use crate::data::{auc, rmse_mae};
use crate::error::{Error, Result};
use crate::gibbs::{delta_conditional, predict_mean};
use crate::ring::TRModel;
use crate::rng::{pg_mean, Rng, RngState};
use crate::tensor::{DataKind, SparseTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub step_size: f64,
    /// The step size is multiplied by this after every epoch.
    pub step_decay: f64,
    pub a0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub psi: f64,
    pub rank: usize,
    pub init_std: f64,
    /// Per-epoch decay of the running residual statistic behind `q(τ)`.
    pub tau_forgetting: f64,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            batch_size: 512,
            epochs: 100,
            step_size: 0.01,
            step_decay: 1.0,
            a0: 2.0,
            alpha0: 1.0,
            beta0: 0.3,
            psi: 1.0,
            rank: 5,
            init_std: 0.1f64.sqrt(),
            tau_forgetting: 0.99,
            parallel: true,
            seed: 0,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.rank == 0 {
            return Err(Error::input("batch_size, epochs and rank must be positive"));
        }
        if !(self.a0 > 1.0) {
            return Err(Error::input("a0 must be greater than 1"));
        }
        for (name, v) in [
            ("step_size", self.step_size),
            ("step_decay", self.step_decay),
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("psi", self.psi),
            ("init_std", self.init_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if !(self.tau_forgetting > 0.0 && self.tau_forgetting <= 1.0) {
            return Err(Error::input("tau_forgetting must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Variational factors that are not point-estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub kind: DataKind,
    pub a0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    /// `q(δ^(d)_r) = Ga(delta_shape, delta_rate)`.
    pub delta_shape: Vec<Vec<f64>>,
    pub delta_rate: Vec<Vec<f64>>,
    /// `E[δ]`, kept in sync with the Gamma parameters.
    pub e_delta: Vec<Vec<f64>>,
    /// `E[ω]` for the entries of the last batch (binary data).
    pub e_omega: Vec<f64>,
    /// `q(τ) = Ga(tau_shape, tau_rate)` (continuous data).
    pub tau_shape: f64,
    pub tau_rate: f64,
    /// Forgetting-weighted mean of the full-data residual sum of squares.
    pub residual_stat: f64,
    pub residual_weight: f64,
    pub free_energy_trace: Vec<f64>,
}

impl VariationalState {
    /// Prior expectations for a model of the given ranks.
    pub fn new(ranks: &[usize], kind: DataKind, a0: f64, alpha0: f64, beta0: f64) -> Self {
        VariationalState {
            kind,
            a0,
            alpha0,
            beta0,
            delta_shape: ranks.iter().map(|&r| vec![a0; r]).collect(),
            delta_rate: ranks.iter().map(|&r| vec![1.0; r]).collect(),
            e_delta: ranks.iter().map(|&r| vec![a0; r]).collect(),
            e_omega: Vec::new(),
            tau_shape: alpha0,
            tau_rate: beta0,
            residual_stat: 0.0,
            residual_weight: 0.0,
            free_energy_trace: Vec::new(),
        }
    }

    pub fn e_tau(&self) -> f64 {
        self.tau_shape / self.tau_rate
    }

    pub fn e_log_tau(&self) -> f64 {
        digamma(self.tau_shape) - self.tau_rate.ln()
    }

    /// `E[φ^(d)_r] = ∏_{l≤r} E[δ^(d)_l]` under independent Gamma factors.
    pub fn expected_phi(&self, d: usize) -> Vec<f64> {
        self.e_delta[d]
            .iter()
            .scan(1.0, |acc, &x| {
                *acc *= x;
                Some(*acc)
            })
            .collect()
    }

    /// Closed-form update of every `q(δ)` given the weights, factor by factor.
    pub fn update_delta(&mut self, model: &TRModel) {
        for d in 0..model.order() {
            let w = model.weight(d);
            for r in 0..w.len() {
                let (shape, rate) = delta_conditional(self.a0, w, &self.e_delta[d], r);
                self.delta_shape[d][r] = shape;
                self.delta_rate[d][r] = rate;
                self.e_delta[d][r] = shape / rate;
            }
        }
    }

    /// Sets `E[ω] = tanh(x/2) / (2x)` for the given latent values.
    pub fn update_omega(&mut self, latent: &[f64]) {
        self.e_omega.clear();
        self.e_omega.extend(latent.iter().map(|&x| pg_mean(x)));
    }

    /// Folds a batch residual sum of squares, already scaled to the full
    /// data set, into the running statistic and refreshes `q(τ)`.
    pub fn update_tau(&mut self, scaled_residual: f64, decay: f64, n_obs: usize) {
        self.residual_weight *= decay;
        self.residual_stat *= decay;
        self.residual_weight += 1.0;
        self.residual_stat += scaled_residual;
        let mean = self.residual_stat / self.residual_weight;
        self.tau_shape = self.alpha0 + 0.5 * n_obs as f64;
        self.tau_rate = self.beta0 + 0.5 * mean;
    }
}

/// E-step on one batch: refreshes `q(δ)`, then `E[ω]` (binary) or `q(τ)`
/// (continuous) from the batch's current latent values.
pub fn e_step(
    model: &TRModel,
    data: &SparseTensor,
    batch: &[usize],
    state: &mut VariationalState,
    tau_decay: f64,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    state.update_delta(model);
    let sub = data.select(batch);
    let latent = predict_mean(std::slice::from_ref(model), &sub)?;
    match data.kind() {
        DataKind::Binary => state.update_omega(&latent),
        DataKind::Continuous => {
            let rss: f64 = sub
                .values()
                .iter()
                .zip(&latent)
                .map(|(y, x)| (y - x) * (y - x))
                .sum();
            let scale = data.len() as f64 / batch.len() as f64;
            state.update_tau(scale * rss, tau_decay, data.len());
        }
    }
    Ok(())
}

/// Adam moment estimates for gradient ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    first: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    second: (Vec<Vec<f64>>, Vec<Vec<f64>>),
}

impl Adam {
    pub fn new(model: &TRModel) -> Self {
        let z = Gradient::zeros_like(model);
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first: (z.cores.clone(), z.weights.clone()),
            second: (z.cores, z.weights),
        }
    }

    /// Moves `model` uphill along `grad` with step size `lr`.
    pub fn ascend(&mut self, model: &mut TRModel, grad: &Gradient, lr: f64) {
        self.steps += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.steps as i32);
        let c2 = 1.0 - b2.powi(self.steps as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p += lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for d in 0..model.order() {
            let params = model.core_mut(d).as_mut_slice();
            for (k, p) in params.iter_mut().enumerate() {
                update(
                    p,
                    grad.cores[d][k],
                    &mut self.first.0[d][k],
                    &mut self.second.0[d][k],
                );
            }
            let params = model.weight_mut(d);
            for (k, p) in params.iter_mut().enumerate() {
                update(
                    p,
                    grad.weights[d][k],
                    &mut self.first.1[d][k],
                    &mut self.second.1[d][k],
                );
            }
        }
    }
}

/// M-step on one batch: gradient of the scaled free energy, then one Adam
/// step. Returns the free energy at the pre-step parameters.
pub fn m_step(
    model: &mut TRModel,
    data: &SparseTensor,
    batch: &[usize],
    state: &VariationalState,
    adam: &mut Adam,
    config: &OnlineConfig,
    lr: f64,
) -> Result<f64> {
    let scale = data.len() as f64 / batch.len() as f64;
    let (value, grad) = free_energy_gradient(
        model,
        data,
        batch,
        &state.e_omega,
        state,
        scale,
        config.psi,
        config.parallel,
    );
    if !grad.is_finite() || !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite free energy or gradient (free energy {value}, gradient norm {}, ranks {:?}, step {})",
            grad.norm(),
            model.ranks(),
            adam.steps
        )));
    }
    adam.ascend(model, &grad, lr);
    Ok(value)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub free_energy: f64,
    pub step_size: f64,
    pub wall_time: f64,
}

/// Resumable trainer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineCheckpoint {
    pub config: OnlineConfig,
    pub model: TRModel,
    pub state: VariationalState,
    pub adam: Adam,
    pub rng: RngState,
    pub epoch: usize,
    pub iteration: usize,
}

pub struct OnlineTrainer {
    data: SparseTensor,
    config: OnlineConfig,
    model: TRModel,
    state: VariationalState,
    adam: Adam,
    rng: Rng,
    epoch: usize,
    iteration: usize,
    started: Instant,
    log: Vec<IterationRecord>,
}

impl OnlineTrainer {
    pub fn new(data: SparseTensor, config: OnlineConfig) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::input("no observations to fit"));
        }
        if config.batch_size > data.len() {
            return Err(Error::input(format!(
                "batch_size {} exceeds the {} observations",
                config.batch_size,
                data.len()
            )));
        }
        let mut rng = Rng::seed_from_u64(config.seed);
        let model = TRModel::random(data.shape(), config.rank, config.init_std, &mut rng)?;
        let state = VariationalState::new(
            &model.ranks(),
            data.kind(),
            config.a0,
            config.alpha0,
            config.beta0,
        );
        let adam = Adam::new(&model);
        Ok(OnlineTrainer {
            data,
            config,
            model,
            state,
            adam,
            rng,
            epoch: 0,
            iteration: 0,
            started: Instant::now(),
            log: Vec::new(),
        })
    }

    pub fn resume(data: SparseTensor, checkpoint: OnlineCheckpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        if checkpoint.model.shape() != data.shape() || checkpoint.state.kind != data.kind() {
            return Err(Error::input("checkpoint does not match the data"));
        }
        Ok(OnlineTrainer {
            data,
            config: checkpoint.config,
            model: checkpoint.model,
            state: checkpoint.state,
            adam: checkpoint.adam,
            rng: Rng::from_state(&checkpoint.rng),
            epoch: checkpoint.epoch,
            iteration: checkpoint.iteration,
            started: Instant::now(),
            log: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> OnlineCheckpoint {
        OnlineCheckpoint {
            config: self.config.clone(),
            model: self.model.clone(),
            state: self.state.clone(),
            adam: self.adam.clone(),
            rng: self.rng.state(),
            epoch: self.epoch,
            iteration: self.iteration,
        }
    }

    pub fn model(&self) -> &TRModel {
        &self.model
    }

    pub fn state(&self) -> &VariationalState {
        &self.state
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &[IterationRecord] {
        &self.log
    }

    /// Takes the accumulated log records, leaving the buffer empty.
    pub fn drain_log(&mut self) -> Vec<IterationRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// One pass over a fresh shuffle of the observations.
    pub fn run_epoch(&mut self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        self.rng.shuffle(&mut order);
        let n_batches = order.len().div_ceil(self.config.batch_size);
        let tau_decay = self.config.tau_forgetting.powf(1.0 / n_batches as f64);
        let lr = self.config.step_size * self.config.step_decay.powi(self.epoch as i32);
        for batch in order.chunks(self.config.batch_size) {
            e_step(&self.model, &self.data, batch, &mut self.state, tau_decay)?;
            let value = m_step(
                &mut self.model,
                &self.data,
                batch,
                &self.state,
                &mut self.adam,
                &self.config,
                lr,
            )?;
            self.iteration += 1;
            self.state.free_energy_trace.push(value);
            self.log.push(IterationRecord {
                iteration: self.iteration,
                epoch: self.epoch + 1,
                free_energy: value,
                step_size: lr,
                wall_time: self.started.elapsed().as_secs_f64(),
            });
        }
        self.epoch += 1;
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (TRModel, VariationalState) {
        (self.model, self.state)
    }
}

/// Fits a fixed-rank model by online variational EM.
pub fn run_online(
    data: &SparseTensor,
    config: OnlineConfig,
) -> Result<(TRModel, VariationalState)> {
    let mut trainer = OnlineTrainer::new(data.clone(), config)?;
    trainer.run()?;
    Ok(trainer.into_parts())
}

/// Validation scores of candidate ranks and the winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub rank: usize,
    /// `(rank, score)`: validation RMSE (continuous, lower is better) or AUC
    /// (binary, higher is better).
    pub scores: Vec<(usize, f64)>,
}

/// Picks the rank with the best held-out score on a seeded split of `data`.
pub fn select_rank(
    data: &SparseTensor,
    candidates: &[usize],
    validation_fraction: f64,
    config: &OnlineConfig,
) -> Result<RankSelection> {
    if candidates.is_empty() {
        return Err(Error::input("no candidate ranks"));
    }
    let (train, valid) = crate::data::split(data, validation_fraction, config.seed)?;
    if valid.is_empty() {
        return Err(Error::input("validation split is empty"));
    }
    let mut scores = Vec::new();
    for &rank in candidates {
        let cfg = OnlineConfig {
            rank,
            batch_size: config.batch_size.min(train.len()),
            ..config.clone()
        };
        let (model, _) = run_online(&train, cfg)?;
        let pred = predict_mean(std::slice::from_ref(&model), &valid)?;
        let score = match data.kind() {
            DataKind::Continuous => rmse_mae(&pred, valid.values()).0,
            DataKind::Binary => auc(&pred, valid.values()).unwrap_or(0.5),
        };
        scores.push((rank, score));
    }
    let better = |a: f64, b: f64| match data.kind() {
        DataKind::Continuous => a < b,
        DataKind::Binary => a > b,
    };
    let mut best = scores[0];
    for &s in &scores[1..] {
        if better(s.1, best.1) {
            best = s;
        }
    }
    Ok(RankSelection {
        rank: best.0,
        scores,
    })
}

#[cfg(test)]
mod tests;
