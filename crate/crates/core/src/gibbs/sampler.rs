use serde::{Deserialize, Serialize};

use super::adapt::{adapt_rank, AdaptOutcome, AdaptStep};
use super::conditionals::{
    draw_tau, latent_values, residual_sum_of_squares, update_core_mode, update_delta,
    update_weights_mode, Augmentation, Workspace,
};
use super::mgp::MgpState;
use super::{GibbsConfig, Init, PosteriorSamples, SweepRecord};
use crate::error::{Error, Result};
use crate::ring::TRModel;
use crate::rng::{fill_pg, Rng, RngState};
use crate::tensor::{DataKind, SparseTensor};

/// A Gibbs chain over one data set. Call [`GibbsSampler::step`] for single
/// sweeps or [`GibbsSampler::run`] to finish the configured schedule.
pub struct GibbsSampler {
    data: SparseTensor,
    config: GibbsConfig,
    model: TRModel,
    mgp: MgpState,
    augmentation: Augmentation,
    sweep: usize,
    rng: Rng,
    newborn: Vec<Vec<bool>>,
    samples: PosteriorSamples,
    ws: Workspace,
}

/// Everything needed to continue a chain bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsCheckpoint {
    pub config: GibbsConfig,
    pub model: TRModel,
    pub mgp: MgpState,
    pub augmentation: Augmentation,
    pub sweep: usize,
    pub rng: RngState,
    pub newborn: Vec<Vec<bool>>,
    pub samples: PosteriorSamples,
}

impl GibbsSampler {
    pub fn new(data: SparseTensor, init: Init, config: GibbsConfig) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::input("no observations to fit"));
        }
        let mut rng = Rng::seed_from_u64(config.seed);
        let weights_from_prior = matches!(init, Init::Random(_));
        let mut model = match init {
            Init::Random(rank) => {
                if rank == 0 {
                    return Err(Error::input("initial rank must be positive"));
                }
                TRModel::random(data.shape(), rank, config.init_std, &mut rng)?
            }
            Init::Model(m) => {
                if m.shape() != data.shape() {
                    return Err(Error::input(format!(
                        "initial model shape {:?} does not match data shape {:?}",
                        m.shape(),
                        data.shape()
                    )));
                }
                m
            }
        };
        let adaption = &config.rank_adaption;
        if adaption.enabled
            && model
                .ranks()
                .iter()
                .any(|&r| r < adaption.min_rank || r > adaption.max_rank)
        {
            return Err(Error::input(format!(
                "initial ranks {:?} outside [{}, {}]",
                model.ranks(),
                adaption.min_rank,
                adaption.max_rank
            )));
        }
        let mgp = MgpState::from_prior(&model.ranks(), config.a0, &mut rng)?;
        if weights_from_prior {
            let weights = mgp.sample_weights(&mut rng)?;
            for (d, w) in weights.into_iter().enumerate() {
                *model.weight_mut(d) = w;
            }
        }
        let augmentation = match data.kind() {
            DataKind::Continuous => Augmentation::Continuous {
                tau: config.init_tau,
            },
            DataKind::Binary => {
                let latent = latent_values(&model, &data, config.parallel);
                let mut omega = vec![0.0; data.len()];
                fill_pg(&mut rng, &latent, &mut omega, config.parallel)?;
                Augmentation::Binary { omega }
            }
        };
        let newborn = model.ranks().iter().map(|&r| vec![false; r]).collect();
        Ok(GibbsSampler {
            data,
            config,
            model,
            mgp,
            augmentation,
            sweep: 0,
            rng,
            newborn,
            samples: PosteriorSamples::default(),
            ws: Workspace::default(),
        })
    }

    pub fn resume(data: SparseTensor, checkpoint: GibbsCheckpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        if checkpoint.model.shape() != data.shape() {
            return Err(Error::input("checkpoint shape does not match data"));
        }
        if checkpoint.mgp.ranks() != checkpoint.model.ranks() {
            return Err(Error::input(
                "checkpoint shrinkage state does not match model",
            ));
        }
        checkpoint.augmentation.check(&data)?;
        Ok(GibbsSampler {
            data,
            config: checkpoint.config,
            model: checkpoint.model,
            mgp: checkpoint.mgp,
            augmentation: checkpoint.augmentation,
            sweep: checkpoint.sweep,
            rng: Rng::from_state(&checkpoint.rng),
            newborn: checkpoint.newborn,
            samples: checkpoint.samples,
            ws: Workspace::default(),
        })
    }

    pub fn checkpoint(&self) -> GibbsCheckpoint {
        GibbsCheckpoint {
            config: self.config.clone(),
            model: self.model.clone(),
            mgp: self.mgp.clone(),
            augmentation: self.augmentation.clone(),
            sweep: self.sweep,
            rng: self.rng.state(),
            newborn: self.newborn.clone(),
            samples: self.samples.clone(),
        }
    }

    pub fn model(&self) -> &TRModel {
        &self.model
    }

    pub fn mgp(&self) -> &MgpState {
        &self.mgp
    }

    pub fn augmentation(&self) -> &Augmentation {
        &self.augmentation
    }

    pub fn samples(&self) -> &PosteriorSamples {
        &self.samples
    }

    /// Completed sweeps.
    pub fn sweep(&self) -> usize {
        self.sweep
    }

    pub fn total_sweeps(&self) -> usize {
        self.config.total_sweeps()
    }

    pub fn is_finished(&self) -> bool {
        self.sweep >= self.total_sweeps()
    }

    /// Overrides the chain state. Used to run the sampler from a state drawn
    /// elsewhere, e.g. from the prior.
    pub fn set_state(
        &mut self,
        model: TRModel,
        mgp: MgpState,
        augmentation: Augmentation,
    ) -> Result<()> {
        if mgp.ranks() != model.ranks() || model.shape() != self.data.shape() {
            return Err(Error::input("state does not match the chain"));
        }
        augmentation.check(&self.data)?;
        self.newborn = model.ranks().iter().map(|&r| vec![false; r]).collect();
        self.model = model;
        self.mgp = mgp;
        self.augmentation = augmentation;
        Ok(())
    }

    pub fn data(&self) -> &SparseTensor {
        &self.data
    }

    /// Replaces the observed values, keeping the index set.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        self.data = self.data.with_values(values)?;
        Ok(())
    }

    /// One sweep in the order δ, λ, cores, τ or ω, then rank adaption.
    pub fn step(&mut self) -> Result<&SweepRecord> {
        let t = self.sweep + 1;
        let cfg = &self.config;
        let data = &self.data;
        update_delta(&mut self.mgp, &self.model, cfg.a0, &mut self.rng)?;
        for d in 0..self.model.order() {
            update_weights_mode(
                &mut self.model,
                &self.mgp,
                &self.augmentation,
                data,
                d,
                &mut self.ws,
                cfg.parallel,
                &mut self.rng,
            )?;
        }
        for d in 0..self.model.order() {
            update_core_mode(
                &mut self.model,
                cfg.psi,
                &self.augmentation,
                data,
                d,
                &mut self.ws,
                cfg.parallel,
                &mut self.rng,
            )?;
        }
        let latent = &self.ws.latent;
        let residual_norm = match &mut self.augmentation {
            Augmentation::Continuous { tau } => {
                *tau = draw_tau(data, latent, cfg.alpha0, cfg.beta0, &mut self.rng)?;
                residual_sum_of_squares(data, latent).sqrt()
            }
            Augmentation::Binary { omega } => {
                fill_pg(&mut self.rng, latent, omega, cfg.parallel)?;
                data.values()
                    .iter()
                    .zip(latent)
                    .map(|(y, x)| (y - sigmoid(*x)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        };
        if !residual_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite residual at sweep {t}; ranks {:?}",
                self.model.ranks()
            )));
        }

        let outcome = if cfg.rank_adaption.enabled && t <= cfg.burn_in {
            // The last burn-in step only prunes, so no untested factor is frozen in.
            let last = t == cfg.burn_in;
            let step = AdaptStep {
                sweep: t,
                allow_grow: !last,
                protected: if last { None } else { Some(&self.newborn) },
                init_std: cfg.init_std,
                core_scale: cfg.psi.sqrt().recip(),
                a0: cfg.a0,
            };
            let outcome = adapt_rank(
                &mut self.model,
                &mut self.mgp,
                &cfg.rank_adaption,
                step,
                &mut self.rng,
            )?;
            self.newborn = self.model.ranks().iter().map(|&r| vec![false; r]).collect();
            for &d in &outcome.grown {
                *self.newborn[d].last_mut().expect("grown bond is nonempty") = true;
            }
            outcome
        } else {
            AdaptOutcome::default()
        };

        self.sweep = t;
        let ranks = self.model.ranks();
        self.samples.rank_trace.push(ranks.clone());
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            self.samples.models.push(self.model.clone());
            if let Some(tau) = self.augmentation.tau() {
                self.samples.taus.push(tau);
            }
        }
        self.samples.log.push(SweepRecord {
            sweep: t,
            ranks,
            residual_norm,
            tau: self.augmentation.tau(),
            pruned: outcome.pruned,
            grown: outcome.grown,
        });
        Ok(self.samples.log.last().expect("just pushed"))
    }

    /// Runs the remaining sweeps of the schedule.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_samples(self) -> PosteriorSamples {
        self.samples
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
