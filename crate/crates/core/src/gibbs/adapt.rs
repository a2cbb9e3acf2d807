use serde::{Deserialize, Serialize};

use super::mgp::MgpState;
use crate::error::{Error, Result};
use crate::ring::TRModel;
use crate::rng::{sample_gamma, sample_normal, Rng};

/// Prune/grow schedule for the bond dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankAdaptionConfig {
    pub enabled: bool,
    /// Put each bond in canonical form (see [`TRModel::canonicalize_bond`])
    /// before testing its weights.
    pub canonicalize: bool,
    /// Factors whose weight magnitude falls below this fraction of the
    /// largest weight magnitude on the same bond are removed.
    pub epsilon: f64,
    /// Growth probability at sweep `t` is `exp(kappa0 + kappa1 · t)`.
    pub kappa0: f64,
    pub kappa1: f64,
    pub min_rank: usize,
    pub max_rank: usize,
}

impl Default for RankAdaptionConfig {
    fn default() -> Self {
        RankAdaptionConfig {
            enabled: true,
            canonicalize: true,
            epsilon: 0.01,
            kappa0: -1.0,
            kappa1: -3e-3,
            min_rank: 1,
            max_rank: 30,
        }
    }
}

impl RankAdaptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::input("epsilon must be positive"));
        }
        if !(self.kappa0 <= 0.0 && self.kappa1 <= 0.0) {
            return Err(Error::input(
                "kappa0 and kappa1 must be non-positive so the growth probability stays in (0, 1]",
            ));
        }
        if self.min_rank == 0 || self.min_rank > self.max_rank {
            return Err(Error::input("need 1 <= min_rank <= max_rank"));
        }
        Ok(())
    }

    pub fn grow_probability(&self, sweep: usize) -> f64 {
        (self.kappa0 + self.kappa1 * sweep as f64).exp()
    }
}

/// What one adaption step did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptOutcome {
    /// `(bond, factor)` pairs removed, factor indices as they were before removal.
    pub pruned: Vec<(usize, usize)>,
    /// Bonds that gained a factor.
    pub grown: Vec<usize>,
}

/// Options for a single adaption step beyond the configured schedule.
#[derive(Clone, Copy, Debug)]
pub struct AdaptStep<'a> {
    pub sweep: usize,
    /// Allow growth at this step.
    pub allow_grow: bool,
    /// Per bond and factor, whether the factor is exempt from pruning.
    pub protected: Option<&'a [Vec<bool>]>,
    /// Standard deviation of the core entries of a new factor.
    pub init_std: f64,
    /// Per-entry scale of the cores after canonicalization.
    pub core_scale: f64,
    pub a0: f64,
}

/// Prunes factors with `|λ_r| < ε · max_h |λ_h|` on each bond (smallest
/// first, never below `min_rank`), after canonicalizing the bond when
/// configured and none of its factors is protected. A bond that lost nothing gains one factor with the scheduled
/// probability, up to `max_rank`. A new factor gets `δ ~ Ga(a0, 1)` and a
/// weight from its MGP prior.
pub fn adapt_rank(
    model: &mut TRModel,
    mgp: &mut MgpState,
    config: &RankAdaptionConfig,
    step: AdaptStep<'_>,
    rng: &mut Rng,
) -> Result<AdaptOutcome> {
    let mut outcome = AdaptOutcome::default();
    let p_grow = config.grow_probability(step.sweep);
    for d in 0..model.order() {
        let protected = step.protected.is_some_and(|p| p[d].iter().any(|&x| x));
        if config.canonicalize && !protected {
            if let Some(canonical) = model.canonicalize_bond(d, step.core_scale)? {
                *model = canonical;
            }
        }
        let weights = model.weight(d);
        let rank = weights.len();
        let threshold = config.epsilon * weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let mut small: Vec<usize> = (0..rank)
            .filter(|&r| weights[r].abs() < threshold || weights[r] == 0.0)
            .filter(|&r| step.protected.map_or(true, |p| !p[d][r]))
            .collect();
        small.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()));
        small.truncate(rank.saturating_sub(config.min_rank));
        small.sort_unstable_by(|a, b| b.cmp(a));
        for &r in &small {
            *model = model.prune_rank(d, r)?;
            mgp.remove(d, r);
            outcome.pruned.push((d, r));
        }
        if small.is_empty() && step.allow_grow && rank < config.max_rank && rng.uniform() < p_grow {
            let delta = sample_gamma(rng, step.a0, 1.0)?;
            mgp.push(d, delta);
            let phi = *mgp.phi()[d].last().expect("bond has at least one factor");
            let weight = sample_normal(rng, 0.0, phi)?;
            *model = model.grow_rank(d, step.init_std, weight, rng)?;
            outcome.grown.push(d);
        }
    }
    Ok(outcome)
}
