//! Wall-clock cost of one Gibbs sweep and one online epoch on sparse
//! synthetic tensors.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, GibbsSampler, Init, RankAdaptionConfig};
use crate::online::{OnlineConfig, OnlineTrainer};
use crate::ring::{unravel_index, TRModel, DEFAULT_DENSE_LIMIT};
use crate::rng::Rng;
use crate::tensor::{DataKind, SparseTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub order: usize,
    pub rank: usize,
    pub missing_rate: f64,
    /// Timed runs per engine; the fastest is reported.
    pub repeats: usize,
    pub batch_size: usize,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            order: 4,
            rank: 2,
            missing_rate: 0.999,
            repeats: 3,
            batch_size: 512,
            parallel: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub observed: usize,
    pub gibbs_seconds: f64,
    pub online_seconds: f64,
}

/// Rank-`rank` ring tensor of shape `size^order` plus unit noise, with each
/// entry observed independently with probability `1 − missing_rate`.
pub fn sparse_problem(size: usize, config: &BenchConfig) -> Result<SparseTensor> {
    if !(0.0..1.0).contains(&config.missing_rate) {
        return Err(Error::input("missing_rate must lie in [0, 1)"));
    }
    let shape = vec![size; config.order];
    let total: u128 = shape.iter().map(|&s| s as u128).product();
    if total > DEFAULT_DENSE_LIMIT {
        return Err(Error::Capacity {
            requested: total,
            limit: DEFAULT_DENSE_LIMIT,
        });
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let model = TRModel::random(&shape, config.rank, 1.0, &mut rng)?;
    let keep = 1.0 - config.missing_rate;
    let mut flat = Vec::new();
    let mut values = Vec::new();
    let mut index = vec![0; shape.len()];
    for pos in 0..total as usize {
        if rng.uniform() < keep {
            unravel_index(&shape, pos, &mut index);
            flat.extend_from_slice(&index);
            values.push(model.eval_entry(&index)? + rng.standard_normal());
        }
    }
    SparseTensor::from_flat(shape, flat, values, DataKind::Continuous)
}

/// Times both engines on [`sparse_problem`]`(size)`.
pub fn time_engines(size: usize, config: &BenchConfig) -> Result<BenchRow> {
    if config.repeats == 0 {
        return Err(Error::input("repeats must be positive"));
    }
    let data = sparse_problem(size, config)?;
    if data.is_empty() {
        return Err(Error::input(format!(
            "no entries observed at size {size}; lower missing_rate"
        )));
    }

    let gibbs_cfg = GibbsConfig {
        burn_in: config.repeats + 1,
        n_samples: 0,
        rank_adaption: RankAdaptionConfig {
            enabled: false,
            ..Default::default()
        },
        parallel: config.parallel,
        seed: config.seed,
        ..Default::default()
    };
    let mut sampler = GibbsSampler::new(data.clone(), Init::Random(config.rank), gibbs_cfg)?;
    sampler.step()?;
    let mut gibbs_seconds = f64::INFINITY;
    for _ in 0..config.repeats {
        let start = Instant::now();
        sampler.step()?;
        gibbs_seconds = gibbs_seconds.min(start.elapsed().as_secs_f64());
    }

    let online_cfg = OnlineConfig {
        batch_size: config.batch_size.min(data.len()),
        epochs: config.repeats + 1,
        rank: config.rank,
        parallel: config.parallel,
        seed: config.seed,
        ..Default::default()
    };
    let mut trainer = OnlineTrainer::new(data.clone(), online_cfg)?;
    trainer.run_epoch()?;
    let mut online_seconds = f64::INFINITY;
    for _ in 0..config.repeats {
        let start = Instant::now();
        trainer.run_epoch()?;
        online_seconds = online_seconds.min(start.elapsed().as_secs_f64());
    }

    Ok(BenchRow {
        size,
        observed: data.len(),
        gibbs_seconds,
        online_seconds,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_is_seeded() {
        let cfg = BenchConfig {
            missing_rate: 0.9,
            ..Default::default()
        };
        let a = sparse_problem(6, &cfg).unwrap();
        let b = sparse_problem(6, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 50 && a.len() < 210, "{}", a.len());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[1.0], &[1.0]), None);
    }

    #[test]
    fn single_size_row() {
        let cfg = BenchConfig {
            missing_rate: 0.5,
            repeats: 1,
            order: 3,
            ..Default::default()
        };
        let row = time_engines(4, &cfg).unwrap();
        assert_eq!(row.size, 4);
        assert!(row.gibbs_seconds > 0.0 && row.online_seconds > 0.0);
    }
}
