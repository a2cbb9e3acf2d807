//! Gibbs sampling for the weighted tensor ring under a multiplicative gamma
//! process prior on the weights, with optional rank adaption during burn-in.

mod adapt;
mod conditionals;
mod mgp;
mod sampler;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use adapt::{adapt_rank, AdaptOutcome, AdaptStep, RankAdaptionConfig};
pub use conditionals::{
    sample_cores, sample_delta, sample_lambda, sample_omega, sample_tau, Augmentation,
};
pub use mgp::{delta_conditional, MgpState};
pub use sampler::{GibbsCheckpoint, GibbsSampler};

use crate::error::{Error, Result};
use crate::ring::TRModel;
use crate::tensor::SparseTensor;
pub(crate) use sampler::sigmoid;

/// Hyperparameters and schedule of a Gibbs run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Shape of the `Ga(a0, 1)` prior on each `δ`; must exceed 1.
    pub a0: f64,
    /// Shape and rate of the `Ga(alpha0, beta0)` prior on the noise precision.
    pub alpha0: f64,
    pub beta0: f64,
    /// Prior precision of every core entry.
    pub psi: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    pub rank_adaption: RankAdaptionConfig,
    /// Standard deviation of core entries at initialization and for new factors.
    pub init_std: f64,
    /// Noise precision at the start of a continuous chain.
    pub init_tau: f64,
    /// Use the rayon pool for per-observation work. Results do not depend on it.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            a0: 2.0,
            alpha0: 1.0,
            beta0: 0.3,
            psi: 1.0,
            burn_in: 1500,
            n_samples: 200,
            thin: 1,
            rank_adaption: RankAdaptionConfig::default(),
            init_std: 0.1f64.sqrt(),
            init_tau: 1.0,
            parallel: true,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 1.0) {
            return Err(Error::input("a0 must be greater than 1"));
        }
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("psi", self.psi),
            ("init_std", self.init_std),
            ("init_tau", self.init_tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if self.thin == 0 {
            return Err(Error::input("thin must be at least 1"));
        }
        if self.rank_adaption.enabled {
            self.rank_adaption.validate()?;
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.n_samples * self.thin
    }
}

/// Starting point of a chain.
#[derive(Clone, Debug)]
pub enum Init {
    /// Uniform rank, random cores, weights from the prior.
    Random(usize),
    /// Given cores and weights.
    Model(TRModel),
}

/// Diagnostics of one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub ranks: Vec<usize>,
    /// Euclidean norm of `y − x` (continuous) or `y − sigmoid(x)` (binary) on
    /// the training entries, before adaption.
    pub residual_norm: f64,
    pub tau: Option<f64>,
    pub pruned: Vec<(usize, usize)>,
    pub grown: Vec<usize>,
}

/// Retained draws and per-sweep traces of a chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub models: Vec<TRModel>,
    pub taus: Vec<f64>,
    pub rank_trace: Vec<Vec<usize>>,
    pub log: Vec<SweepRecord>,
}

impl PosteriorSamples {
    /// Most frequent rank vector among retained models, or the last traced
    /// ranks when nothing was retained.
    pub fn estimated_ranks(&self) -> Option<Vec<usize>> {
        if self.models.is_empty() {
            return self.rank_trace.last().cloned();
        }
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for m in &self.models {
            *counts.entry(m.ranks()).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(r, _)| r)
    }

    /// Posterior mean of the latent value at every entry of `at`.
    pub fn predict(&self, at: &SparseTensor) -> Result<Vec<f64>> {
        if self.models.is_empty() {
            return Err(Error::input("no retained samples to average"));
        }
        predict_mean(&self.models, at)
    }
}

/// Average of the entries of several models at the indices of `at`.
pub fn predict_mean(models: &[TRModel], at: &SparseTensor) -> Result<Vec<f64>> {
    let mut out = vec![0.0; at.len()];
    for m in models {
        if m.shape() != at.shape() {
            return Err(Error::input(format!(
                "model shape {:?} does not match index shape {:?}",
                m.shape(),
                at.shape()
            )));
        }
        for (o, x) in out.iter_mut().zip(conditionals::latent_values(m, at, true)) {
            *o += x;
        }
    }
    let k = models.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Runs a chain for the configured schedule and returns its samples.
pub fn run_gibbs(data: &SparseTensor, init: Init, config: GibbsConfig) -> Result<PosteriorSamples> {
    let mut sampler = GibbsSampler::new(data.clone(), init, config)?;
    sampler.run()?;
    Ok(sampler.into_samples())
}
