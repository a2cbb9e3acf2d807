//! Seeded random streams and the samplers the engines need: Normal, Gamma
//! and Pólya-Gamma PG(1, c).
//!
//! All randomness flows through an explicit [`Rng`] handle, a ChaCha8 stream
//! whose full position can be captured in an [`RngState`] and restored later,
//! so a chain can be checkpointed and resumed bit-exactly.
//!
//! Parallel workers never share a stream. A child stream for worker `k` is
//! seeded with `mix(root_seed, k)` (SplitMix64 finalizer over the root seed
//! combined with the hashed worker index); see [`Rng::split`].

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Deterministic random stream with an explicit seed.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
}

/// Serializable snapshot of an [`Rng`] position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` derived from `seed`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for worker `index`.
    pub fn split(&self, index: u64) -> Rng {
        Rng::seed_from_u64(mix_seed(self.seed, index))
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            key: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.key);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        Rng {
            inner,
            seed: state.seed,
        }
    }

    /// Uniform draw on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    pub fn exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Normal draw parameterized by mean and precision (inverse variance).
pub fn sample_normal(rng: &mut Rng, mean: f64, precision: f64) -> Result<f64> {
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::input(format!(
            "normal precision must be positive and finite, got {precision}"
        )));
    }
    if !mean.is_finite() {
        return Err(Error::Numerical(format!("normal mean is {mean}")));
    }
    Ok(mean + rng.standard_normal() / precision.sqrt())
}

/// Gamma draw with the given shape and rate (mean = shape / rate).
pub fn sample_gamma(rng: &mut Rng, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::input(format!(
            "gamma shape and rate must be positive and finite, got ({shape}, {rate})"
        )));
    }
    let g = rand_distr::Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::input(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(&mut rng.inner))
}

/// Bernoulli draw with success probability `p`.
pub fn sample_bernoulli(rng: &mut Rng, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!(
            "bernoulli probability {p} outside [0, 1]"
        )));
    }
    Ok(rng.uniform() < p)
}

/// Mean of PG(1, c): `tanh(c/2) / (2c)`, with the limit 1/4 at `c = 0`.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        // tanh(c/2)/(2c) = 1/4 - c^2/48 + c^4/480 - ...
        let c2 = c * c;
        0.25 - c2 / 48.0 + c2 * c2 / 480.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Draws from the Pólya-Gamma distribution PG(b, c). Only `b = 1` is supported.
pub fn sample_pg(rng: &mut Rng, b: u32, c: f64) -> Result<f64> {
    if b != 1 {
        return Err(Error::Unsupported(format!(
            "PG(b, c) sampling is implemented for b = 1 only, got b = {b}"
        )));
    }
    if !c.is_finite() {
        return Err(Error::Numerical(format!("PG tilt parameter is {c}")));
    }
    Ok(pg_one(rng, c))
}

/// Fills `out[n]` with a PG(1, `tilts[n]`) draw.
///
/// Draws are taken in fixed chunks of `PG_CHUNK` entries, chunk `k` using the
/// child stream `mix(base, k)` where `base` is one word taken from `rng`. The
/// result therefore depends only on `rng`'s state, never on thread count.
pub fn fill_pg(rng: &mut Rng, tilts: &[f64], out: &mut [f64], parallel: bool) -> Result<()> {
    assert_eq!(tilts.len(), out.len());
    if let Some(bad) = tilts.iter().find(|c| !c.is_finite()) {
        return Err(Error::Numerical(format!("PG tilt parameter is {bad}")));
    }
    let base = rng.next_u64();
    let work = |(k, (o, c)): (usize, (&mut [f64], &[f64]))| {
        let mut child = Rng::seed_from_u64(mix_seed(base, k as u64));
        for (w, &ci) in o.iter_mut().zip(c) {
            *w = pg_one(&mut child, ci);
        }
    };
    if parallel {
        out.par_chunks_mut(PG_CHUNK)
            .zip(tilts.par_chunks(PG_CHUNK))
            .enumerate()
            .for_each(work);
    } else {
        out.chunks_mut(PG_CHUNK)
            .zip(tilts.chunks(PG_CHUNK))
            .enumerate()
            .for_each(work);
    }
    Ok(())
}

const PG_CHUNK: usize = 1024;

// Exact alternating-series sampler for J*(1, z), returning PG(1, c) = J*(1, c/2) / 4.
const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;

fn pg_one(rng: &mut Rng, c: f64) -> f64 {
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = truncated_exponential_mass(z, fz);
    loop {
        let x = if rng.uniform() < p_exp {
            TRUNC + rng.exponential() / fz
        } else {
            truncated_inverse_gaussian(rng, z)
        };
        let mut s = series_coefficient(0, x);
        let y = rng.uniform() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coefficient(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coefficient(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Piecewise coefficients of the alternating series for the J*(1, 0) density.
fn series_coefficient(n: u32, x: f64) -> f64 {
    let half = n as f64 + 0.5;
    let k = half * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * half * half / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the right (exponential) piece of the envelope.
fn truncated_exponential_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_normal_cdf(b);
    let xa = x0 + z + log_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian(1/z, 1) draw truncated to (0, TRUNC].
fn truncated_inverse_gaussian(rng: &mut Rng, z: f64) -> f64 {
    let t = TRUNC;
    let mut x = t + 1.0;
    if TRUNC_RECIP > z {
        let mut alpha = 0.0;
        while rng.uniform() > alpha {
            let mut e1 = rng.exponential();
            let mut e2 = rng.exponential();
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.exponential();
                e2 = rng.exponential();
            }
            x = 1.0 + e1 * t;
            x = t / (x * x);
            alpha = (-0.5 * z * z * x).exp();
        }
    } else {
        let mu = 1.0 / z;
        while x > t {
            let y = rng.standard_normal();
            let y = y * y;
            let half_mu = 0.5 * mu;
            let mu_y = mu * y;
            x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.uniform() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
    }
    x
}

/// `ln Φ(x)` accurate far into the lower tail.
fn log_normal_cdf(x: f64) -> f64 {
    if x > -20.0 {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        // Mills ratio continued fraction: Φ(x) = φ(x) / (u + 1/(u + 2/(u + ...))), u = -x.
        let u = -x;
        let mut frac = u;
        for k in (1..=60).rev() {
            frac = u + k as f64 / frac;
        }
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() - frac.ln()
    }
}
