//! Synthetic problems, file formats, splits and evaluation metrics.

pub mod io;
mod metrics;
mod synthetic;

pub use metrics::{accuracy, auc, compute_metrics, psnr, rank_error, rmse_mae, MetricReport};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{DataKind, SparseTensor};

/// Seeded random split; `test_fraction` of the entries go to the second tensor.
pub fn split(
    data: &SparseTensor,
    test_fraction: f64,
    seed: u64,
) -> Result<(SparseTensor, SparseTensor)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::input("test_fraction must lie in [0, 1]"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    Rng::seed_from_u64(seed).shuffle(&mut order);
    let n_test = (test_fraction * data.len() as f64).round() as usize;
    let (test, train) = order.split_at(n_test);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select(&train), data.select(&test)))
}

/// Subsamples the majority class of binary data so both labels are equally
/// frequent. Entries keep their original order.
pub fn balance_binary(data: &SparseTensor, seed: u64) -> Result<SparseTensor> {
    if data.kind() != DataKind::Binary {
        return Err(Error::Mode {
            op: "balance_binary",
            kind: "continuous",
        });
    }
    let (mut ones, mut zeros): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&n| data.value(n) == 1.0);
    let keep = ones.len().min(zeros.len());
    let mut rng = Rng::seed_from_u64(seed);
    rng.shuffle(&mut ones);
    rng.shuffle(&mut zeros);
    let mut chosen: Vec<usize> = ones[..keep].iter().chain(&zeros[..keep]).copied().collect();
    chosen.sort_unstable();
    Ok(data.select(&chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let entries = (0..50).map(|i| (vec![i], i as f64)).collect();
        let t = SparseTensor::new(vec![50], entries, DataKind::Continuous).unwrap();
        let (a, b) = split(&t, 0.2, 3).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        let mut all: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(split(&t, 0.2, 3).unwrap(), (a, b));
    }

    #[test]
    fn balance_equalizes_classes() {
        let entries = (0..30)
            .map(|i| (vec![i], if i < 8 { 1.0 } else { 0.0 }))
            .collect();
        let t = SparseTensor::new(vec![30], entries, DataKind::Binary).unwrap();
        let b = balance_binary(&t, 1).unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(b.values().iter().filter(|&&v| v == 1.0).count(), 8);
    }
}
