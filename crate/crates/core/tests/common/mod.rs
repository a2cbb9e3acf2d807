//! Oracles and statistics shared by the integration tests. Everything here
//! is computed independently of the library's own algebra.

#![allow(dead_code)]

use std::f64::consts::PI;

use ringfit::{Rng, TRModel};

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test: `(D, p-value)`.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample KS test: `(D, p-value)`.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the mean of an autocorrelated series by batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&x[b * size..(b + 1) * size]))
        .collect();
    (variance(&means) / batches as f64).sqrt()
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, with the `c → 0` limit 1/4.
pub fn pg_mean_oracle(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (c / 2.0).tanh() / (2.0 * c)
    }
}

/// `cosh(√u)` continued analytically to `u < 0` as `cos(√−u)`.
fn cosh_sqrt(u: f64) -> f64 {
    if u >= 0.0 {
        u.sqrt().cosh()
    } else {
        (-u).sqrt().cos()
    }
}

/// Variance of PG(1, c) as the second derivative at 0 of the cumulant
/// generating function `log cosh(c/2) − log cosh(√(c²/4 − t/2))`, by
/// central differences.
pub fn pg_variance_oracle(c: f64) -> f64 {
    let k = |t: f64| (c / 2.0).cosh().ln() - cosh_sqrt(c * c / 4.0 - t / 2.0).ln();
    let h = 1e-3;
    (k(h) - 2.0 * k(0.0) + k(-h)) / (h * h)
}

/// PG(1, c) from its infinite convolution of exponentials, truncated at
/// `terms` with the tail replaced by its mean.
pub fn pg_series_draw(rng: &mut Rng, c: f64, terms: usize) -> f64 {
    let shift = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    let mut head_mean = 0.0;
    for k in 1..=terms {
        let denom = (k as f64 - 0.5).powi(2) + shift;
        sum += rng.exponential() / denom;
        head_mean += 1.0 / denom;
    }
    let scale = 1.0 / (2.0 * PI * PI);
    sum * scale + (pg_mean_oracle(c) - head_mean * scale)
}

/// Dense row-major product of `a` (m×k) and `b` (k×n).
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
        }
    }
    out
}

/// `tr(∏_d G_d(i_d) Λ_d)` by explicit summation over every closed path of
/// bond indices.
pub fn brute_force_entry(model: &TRModel, index: &[usize]) -> f64 {
    let d = model.order();
    let ranks = model.ranks();
    let mut total = 0.0;
    let mut bonds = vec![0usize; d];
    loop {
        // bonds[k] is the index on the output bond of core k.
        let mut prod = 1.0;
        for k in 0..d {
            let input = bonds[(k + d - 1) % d];
            let output = bonds[k];
            prod *= model.core(k).get(index[k], input, output) * model.weight(k)[output];
        }
        total += prod;
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            bonds[k] += 1;
            if bonds[k] < ranks[k] {
                break;
            }
            bonds[k] = 0;
            k += 1;
        }
    }
}

/// Random model with per-mode ranks in `1..=max_rank` and nonzero weights.
pub fn random_model(rng: &mut Rng, max_order: usize, max_size: usize, max_rank: usize) -> TRModel {
    let order = 1 + rng.below(max_order);
    let shape: Vec<usize> = (0..order).map(|_| 1 + rng.below(max_size)).collect();
    let ranks: Vec<usize> = (0..order).map(|_| 1 + rng.below(max_rank)).collect();
    let mut m = TRModel::random_with_ranks(&shape, &ranks, 1.0, rng).unwrap();
    for d in 0..order {
        for w in m.weight_mut(d).iter_mut() {
            *w = rng.standard_normal();
        }
    }
    m
}

pub fn random_index(rng: &mut Rng, shape: &[usize]) -> Vec<usize> {
    shape.iter().map(|&s| rng.below(s)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
