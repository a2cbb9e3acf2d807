mod common;

use common::{pg_mean_oracle, pg_variance_oracle, variance};
use proptest::prelude::*;
use ringfit::gibbs::{adapt_rank, AdaptStep, MgpState, RankAdaptionConfig};
use ringfit::rng::{pg_mean, sample_pg};
use ringfit::{Rng, TRModel};

#[test]
fn variance_oracle_matches_closed_form() {
    // Var PG(1, c) = (sinh c − c) / (4 c³ cosh²(c/2)), and 1/24 at c = 0.
    assert!((pg_variance_oracle(0.0) - 1.0 / 24.0).abs() < 1e-6);
    for c in [0.5f64, 1.0, 5.0] {
        let closed = (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2));
        assert!(
            (pg_variance_oracle(c) - closed).abs() < 1e-6 * closed,
            "c = {c}"
        );
    }
}

#[test]
fn pg_variance_within_five_percent() {
    let mut rng = Rng::seed_from_u64(11);
    for c in [0.0, 1.0, 5.0] {
        let draws: Vec<f64> = (0..200_000)
            .map(|_| sample_pg(&mut rng, 1, c).unwrap())
            .collect();
        let v = variance(&draws);
        let oracle = pg_variance_oracle(c);
        assert!((v / oracle - 1.0).abs() < 0.05, "c = {c}: {v} vs {oracle}");
        assert!(draws.iter().all(|&w| w > 0.0));
    }
}

#[test]
fn pg_mean_function_matches_oracle() {
    for c in [0.0, 1e-9, 1e-3, 0.5, 2.0, 30.0, -4.0] {
        assert!((pg_mean(c) - pg_mean_oracle(c)).abs() < 1e-14);
    }
}

#[test]
fn samplers_are_deterministic() {
    let draw = |seed| {
        let mut rng = Rng::seed_from_u64(seed);
        (0..100)
            .map(|i| sample_pg(&mut rng, 1, i as f64 / 10.0).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn mgp_prior_precision_is_nondecreasing() {
    let mut rng = Rng::seed_from_u64(5);
    let n = 100_000;
    let ranks = [6];
    let mut sums = [0.0f64; 6];
    let mut logs = [0.0f64; 6];
    for _ in 0..n {
        let s = MgpState::from_prior(&ranks, 2.0, &mut rng).unwrap();
        for (r, &phi) in s.phi()[0].iter().enumerate() {
            sums[r] += phi;
            logs[r] += phi.ln();
        }
    }
    // E[φ_r] = 2^r grows fast enough that sampling noise cannot reorder it.
    for r in 1..6 {
        assert!(sums[r] >= sums[r - 1], "{sums:?}");
        assert!(logs[r] >= logs[r - 1], "{logs:?}");
    }
    let m0 = sums[0] / n as f64;
    assert!((m0 - 2.0).abs() < 0.03, "{m0}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adaption_respects_rank_bounds(seed in any::<u64>(), min in 1usize..3, span in 0usize..4, sweep in 0usize..50) {
        let max = min + span;
        let mut rng = Rng::seed_from_u64(seed);
        let start = min + rng.below(span + 1);
        let mut model = TRModel::random(&[3, 2, 4], start, 1.0, &mut rng).unwrap();
        for d in 0..3 {
            for w in model.weight_mut(d).iter_mut() {
                *w = 0.05 * rng.standard_normal();
            }
        }
        let mut mgp = MgpState::from_prior(&model.ranks(), 2.0, &mut rng).unwrap();
        let config = RankAdaptionConfig {
            epsilon: 0.03,
            kappa0: 0.0,
            kappa1: 0.0,
            min_rank: min,
            max_rank: max,
            ..Default::default()
        };
        for t in 0..10 {
            let step = AdaptStep {
                sweep: sweep + t,
                allow_grow: true,
                protected: None,
                init_std: 0.3,
                core_scale: 1.0,
                a0: 2.0,
            };
            adapt_rank(&mut model, &mut mgp, &config, step, &mut rng).unwrap();
            for r in model.ranks() {
                prop_assert!(r >= min && r <= max, "{:?} outside [{min}, {max}]", model.ranks());
            }
            prop_assert_eq!(mgp.ranks(), model.ranks());
        }
    }
}
