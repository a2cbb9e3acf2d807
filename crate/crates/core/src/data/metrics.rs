use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DataKind, SparseTensor};

/// Held-out accuracy summary. Continuous fields are set for continuous data,
/// classification fields for binary data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_err: Option<f64>,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "count = {}", self.count)?;
        for (name, v) in [
            ("rmse", self.rmse),
            ("mae", self.mae),
            ("psnr", self.psnr),
            ("auc", self.auc),
            ("acc", self.acc),
            ("rank_err", self.rank_err),
        ] {
            if let Some(v) = v {
                writeln!(f, "{name} = {v}")?;
            }
        }
        Ok(())
    }
}

/// Scores `pred` against the values of `test`, entry by entry.
///
/// Continuous predictions are compared directly; PSNR needs `data_range`.
/// Binary predictions are logits: AUC ranks them and accuracy thresholds
/// `sigmoid(pred)` at 0.5.
pub fn compute_metrics(
    pred: &[f64],
    test: &SparseTensor,
    data_range: Option<f64>,
) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(Error::input("empty test set"));
    }
    if pred.len() != test.len() {
        return Err(Error::input(format!(
            "{} predictions for {} test entries",
            pred.len(),
            test.len()
        )));
    }
    let mut report = MetricReport {
        count: test.len(),
        ..Default::default()
    };
    match test.kind() {
        DataKind::Continuous => {
            let (r, m) = rmse_mae(pred, test.values());
            report.rmse = Some(r);
            report.mae = Some(m);
            report.psnr = data_range.map(|range| psnr(range, r * r));
        }
        DataKind::Binary => {
            report.auc = auc(pred, test.values());
            report.acc = Some(accuracy(pred, test.values()));
        }
    }
    Ok(report)
}

pub fn rmse_mae(pred: &[f64], truth: &[f64]) -> (f64, f64) {
    let n = truth.len() as f64;
    let (sq, abs) = pred
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(sq, abs), (p, t)| {
            (sq + (p - t) * (p - t), abs + (p - t).abs())
        });
    ((sq / n).sqrt(), abs / n)
}

pub fn psnr(data_range: f64, mse: f64) -> f64 {
    20.0 * data_range.log10() - 10.0 * mse.log10()
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing their
/// average rank. `None` when only one class is present.
pub fn auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let negatives = labels.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return None;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1.0)
        .map(|(r, _)| r)
        .sum();
    Some((rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives))
}

pub fn accuracy(logits: &[f64], labels: &[f64]) -> f64 {
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&x, &y)| (crate::gibbs::sigmoid(x) > 0.5) == (y == 1.0))
        .count();
    hits as f64 / labels.len() as f64
}

/// Relative absolute rank error `Σ|est − truth| / Σ truth`.
pub fn rank_error(estimated: &[usize], truth: &[usize]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::input(format!(
            "{} estimated ranks but {} true ranks",
            estimated.len(),
            truth.len()
        )));
    }
    let total: usize = truth.iter().sum();
    if total == 0 {
        return Err(Error::input("true ranks sum to zero"));
    }
    let diff: usize = estimated
        .iter()
        .zip(truth)
        .map(|(&e, &t)| e.abs_diff(t))
        .sum();
    Ok(diff as f64 / total as f64)
}
