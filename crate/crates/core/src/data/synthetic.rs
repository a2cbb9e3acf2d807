use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{unravel_index, DenseTensor, TRModel, DEFAULT_DENSE_LIMIT};
use crate::rng::{sample_bernoulli, Rng};
use crate::tensor::{DataKind, SparseTensor};

/// Recipe for a synthetic completion problem with a tensor ring ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub shape: Vec<usize>,
    pub true_rank: usize,
    /// Signal-to-noise ratio in dB for continuous data; `None` means noiseless.
    pub snr_db: Option<f64>,
    /// Fraction of entries held out, in `[0, 1)`.
    pub missing_rate: f64,
    pub kind: DataKind,
    /// Binary data only: logits are `signal_scale` times the standardized signal.
    pub signal_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            shape: vec![10, 10, 10, 10],
            true_rank: 5,
            snr_db: Some(20.0),
            missing_rate: 0.1,
            kind: DataKind::Continuous,
            signal_scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(Error::input("shape must be nonempty with positive sizes"));
        }
        if self.true_rank == 0 {
            return Err(Error::input("true_rank must be positive"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::input("missing_rate must lie in [0, 1)"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::input(
                    "snr_db must be finite; omit it for noiseless data",
                ));
            }
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return Err(Error::input("signal_scale must be positive"));
        }
        Ok(())
    }

    /// Noise standard deviation for a unit-variance signal.
    pub fn noise_std(&self) -> f64 {
        match (self.kind, self.snr_db) {
            (DataKind::Continuous, Some(snr)) => 10f64.powf(-snr / 20.0),
            _ => 0.0,
        }
    }
}

/// Generated problem: observed/held-out split plus the ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: SparseTensor,
    pub test: SparseTensor,
    /// Ring whose entries plus `offset` give the standardized signal.
    pub truth: TRModel,
    pub offset: f64,
    /// Standardized noiseless signal (zero mean, unit variance).
    pub signal: DenseTensor,
    pub noise_std: f64,
    /// `max − min` of the standardized signal.
    pub data_range: f64,
}

/// Draws cores from `N(0, 1)`, standardizes the full tensor, adds Gaussian
/// noise (continuous) or draws Bernoulli-logit labels (binary), then hides
/// each entry independently with probability `missing_rate`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let mut truth = TRModel::random(&spec.shape, spec.true_rank, 1.0, &mut rng)?;
    let raw = truth.reconstruct_dense(DEFAULT_DENSE_LIMIT)?;
    let n = raw.data.len() as f64;
    let mean = raw.data.iter().sum::<f64>() / n;
    let var = raw.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Numerical(
            "generated signal has zero variance".into(),
        ));
    }
    let sd = var.sqrt();
    let signal: Vec<f64> = raw.data.iter().map(|x| (x - mean) / sd).collect();
    for w in truth.weight_mut(0).iter_mut() {
        *w /= sd;
    }
    let offset = -mean / sd;

    let noise_std = spec.noise_std();
    let order = spec.shape.len();
    let mut idx = vec![0usize; order];
    let (mut train_idx, mut train_val) = (Vec::new(), Vec::new());
    let (mut test_idx, mut test_val) = (Vec::new(), Vec::new());
    for (pos, &s) in signal.iter().enumerate() {
        let value = match spec.kind {
            DataKind::Continuous => s + noise_std * rng.standard_normal(),
            DataKind::Binary => {
                let p = crate::gibbs::sigmoid(spec.signal_scale * s);
                if sample_bernoulli(&mut rng, p)? {
                    1.0
                } else {
                    0.0
                }
            }
        };
        unravel_index(&spec.shape, pos, &mut idx);
        if rng.uniform() < spec.missing_rate {
            test_idx.extend_from_slice(&idx);
            test_val.push(value);
        } else {
            train_idx.extend_from_slice(&idx);
            train_val.push(value);
        }
    }
    let (lo, hi) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Ok(SyntheticData {
        train: SparseTensor::from_flat(spec.shape.clone(), train_idx, train_val, spec.kind)?,
        test: SparseTensor::from_flat(spec.shape.clone(), test_idx, test_val, spec.kind)?,
        truth,
        offset,
        signal: DenseTensor {
            shape: spec.shape.clone(),
            data: signal,
        },
        noise_std,
        data_range: hi - lo,
    })
}
