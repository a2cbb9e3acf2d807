use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_gamma, sample_normal, Rng};

/// Multiplicative gamma process shrinkage state, one vector per bond.
///
/// `phi[d][r]` is the prior precision of weight `λ^(d)_r` and equals the
/// running product `delta[d][0] · ... · delta[d][r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgpState {
    delta: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

impl MgpState {
    pub fn new(delta: Vec<Vec<f64>>) -> Result<Self> {
        for (d, v) in delta.iter().enumerate() {
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::input(format!("delta for bond {d} must be positive")));
            }
        }
        let phi = delta.iter().map(|v| cumulative_product(v)).collect();
        Ok(MgpState { delta, phi })
    }

    /// Draws every `δ` from its prior `Ga(a0, 1)`.
    pub fn from_prior(ranks: &[usize], a0: f64, rng: &mut Rng) -> Result<Self> {
        let delta = ranks
            .iter()
            .map(|&r| (0..r).map(|_| sample_gamma(rng, a0, 1.0)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        MgpState::new(delta)
    }

    pub fn delta(&self) -> &[Vec<f64>] {
        &self.delta
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.delta.iter().map(Vec::len).collect()
    }

    pub(crate) fn set_delta(&mut self, d: usize, r: usize, value: f64) {
        self.delta[d][r] = value;
        self.phi[d] = cumulative_product(&self.delta[d]);
    }

    pub(crate) fn remove(&mut self, d: usize, r: usize) {
        self.delta[d].remove(r);
        self.phi[d] = cumulative_product(&self.delta[d]);
    }

    pub(crate) fn push(&mut self, d: usize, value: f64) {
        self.delta[d].push(value);
        self.phi[d] = cumulative_product(&self.delta[d]);
    }

    /// Draws weights `λ^(d)_r ~ N(0, 1/φ^(d)_r)`.
    pub fn sample_weights(&self, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        self.phi
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&prec| sample_normal(rng, 0.0, prec))
                    .collect()
            })
            .collect()
    }
}

fn cumulative_product(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(1.0, |acc, &x| {
            *acc *= x;
            Some(*acc)
        })
        .collect()
}

/// Shape and rate of the Gamma conditional of `δ_r` given the weights of
/// one bond and the other `δ`.
pub fn delta_conditional(a0: f64, weights: &[f64], delta: &[f64], r: usize) -> (f64, f64) {
    let len = weights.len();
    let shape = a0 + 0.5 * (len - r) as f64;
    let mut prod = 1.0;
    let mut rate_sum = 0.0;
    for h in 0..len {
        if h != r {
            prod *= delta[h];
        }
        if h >= r {
            rate_sum += weights[h] * weights[h] * prod;
        }
    }
    (shape, 1.0 + 0.5 * rate_sum)
}
