use super::*;
use crate::ring::Core;

fn random_problem(kind: DataKind, seed: u64) -> (TRModel, SparseTensor) {
    let mut rng = Rng::seed_from_u64(seed);
    let shape = [3, 2, 4];
    let model = {
        let mut m = TRModel::random_with_ranks(&shape, &[2, 3, 2], 0.7, &mut rng).unwrap();
        for d in 0..3 {
            for w in m.weight_mut(d).iter_mut() {
                *w = 0.5 + rng.uniform();
            }
        }
        m
    };
    let mut entries = Vec::new();
    for i in 0..3 {
        for j in 0..2 {
            for k in 0..4 {
                if rng.uniform() < 0.8 {
                    let v = match kind {
                        DataKind::Continuous => rng.standard_normal(),
                        DataKind::Binary => (rng.uniform() < 0.5) as u8 as f64,
                    };
                    entries.push((vec![i, j, k], v));
                }
            }
        }
    }
    (
        model,
        SparseTensor::new(shape.to_vec(), entries, kind).unwrap(),
    )
}

fn state_for(model: &TRModel, data: &SparseTensor) -> VariationalState {
    let mut s = VariationalState::new(&model.ranks(), data.kind(), 2.0, 1.0, 0.3);
    let all: Vec<usize> = (0..data.len()).collect();
    e_step(model, data, &all, &mut s, 1.0).unwrap();
    s
}

#[test]
fn omega_expectations() {
    let mut s = VariationalState::new(&[1], DataKind::Binary, 2.0, 1.0, 1.0);
    s.update_omega(&[0.0, 2.0, -2.0]);
    assert_eq!(s.e_omega[0], 0.25);
    assert!((s.e_omega[1] - 1f64.tanh() / 4.0).abs() < 1e-15);
    assert_eq!(s.e_omega[1], s.e_omega[2]);
}

#[test]
fn zero_weights_give_prior_delta_means() {
    let mut rng = Rng::seed_from_u64(1);
    let mut m = TRModel::random(&[2, 2], 4, 1.0, &mut rng).unwrap();
    m.weight_mut(0).fill(0.0);
    let mut s = VariationalState::new(&m.ranks(), DataKind::Continuous, 2.0, 1.0, 1.0);
    s.update_delta(&m);
    for r in 0..4 {
        assert_eq!(s.e_delta[0][r], 2.0 + (4 - r) as f64 / 2.0);
    }
}

#[test]
fn binary_data_term_vanishes_at_zero() {
    let cores = vec![
        Core::zeros(2, 1, 1),
        Core::from_vec(2, 1, 1, vec![1.0, 1.0]).unwrap(),
    ];
    let m = TRModel::new(cores, vec![vec![1.0], vec![1.0]]).unwrap();
    let data = SparseTensor::new(
        vec![2, 2],
        vec![(vec![0, 0], 1.0), (vec![1, 1], 0.0)],
        DataKind::Binary,
    )
    .unwrap();
    let s = state_for(&m, &data);
    let full = free_energy(&m, &data, &[0, 1], &s.e_omega, &s, 1.0, 1.0);
    assert_eq!(full, prior_terms(&m, &s, 1.0));
}

#[test]
fn weight_prior_decreases_with_magnitude() {
    let mut m = TRModel::new(vec![Core::zeros(1, 2, 2)], vec![vec![0.0, 0.0]]).unwrap();
    let s = VariationalState::new(&[2], DataKind::Binary, 2.0, 1.0, 1.0);
    let mut last = prior_terms(&m, &s, 1.0);
    for v in [0.1, 0.5, -1.0, 3.0] {
        m.weight_mut(0)[1] = v;
        let now = prior_terms(&m, &s, 1.0);
        assert!(now < last);
        last = now;
    }
}

fn finite_difference_check(kind: DataKind, seed: u64) {
    let (model, data) = random_problem(kind, seed);
    let state = state_for(&model, &data);
    let batch: Vec<usize> = (0..data.len()).step_by(2).collect();
    let omega: Vec<f64> = if kind == DataKind::Binary {
        let sub = data.select(&batch);
        predict_mean(std::slice::from_ref(&model), &sub)
            .unwrap()
            .iter()
            .map(|&x| pg_mean(x))
            .collect()
    } else {
        vec![]
    };
    let scale = 1.7;
    let f = |m: &TRModel| free_energy(m, &data, &batch, &omega, &state, scale, 1.3);
    let (value, grad) =
        free_energy_gradient(&model, &data, &batch, &omega, &state, scale, 1.3, false);
    assert!((value - f(&model)).abs() < 1e-10 * value.abs().max(1.0));
    let h = 1e-5;
    let check = |analytic: f64, plus: TRModel, minus: TRModel| {
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(1e-2);
        assert!(
            (analytic - numeric).abs() / denom < 1e-5,
            "{analytic} vs {numeric}"
        );
    };
    for d in 0..model.order() {
        for k in 0..model.core(d).as_slice().len() {
            let mut p = model.clone();
            p.core_mut(d).as_mut_slice()[k] += h;
            let mut m = model.clone();
            m.core_mut(d).as_mut_slice()[k] -= h;
            check(grad.cores[d][k], p, m);
        }
        for r in 0..model.weight(d).len() {
            let mut p = model.clone();
            p.weight_mut(d)[r] += h;
            let mut m = model.clone();
            m.weight_mut(d)[r] -= h;
            check(grad.weights[d][r], p, m);
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    finite_difference_check(DataKind::Continuous, 3);
    finite_difference_check(DataKind::Binary, 4);
}

#[test]
fn minibatch_gradient_is_unbiased() {
    let (model, data) = random_problem(DataKind::Continuous, 5);
    let state = state_for(&model, &data);
    let all: Vec<usize> = (0..data.len()).collect();
    let (_, full) = data_term_gradient(&model, &data, &all, &[], &state, 1.0, false);
    let batch_size = 4;
    let batches: Vec<&[usize]> = all.chunks(batch_size).collect();
    let mut mean = Gradient::zeros_like(&model);
    for b in &batches {
        let scale = data.len() as f64 / b.len() as f64;
        let (_, g) = data_term_gradient(&model, &data, b, &[], &state, scale, false);
        let w = b.len() as f64 / data.len() as f64;
        for (acc, v) in mean
            .cores
            .iter_mut()
            .flatten()
            .zip(g.cores.iter().flatten())
        {
            *acc += w * v;
        }
        for (acc, v) in mean
            .weights
            .iter_mut()
            .flatten()
            .zip(g.weights.iter().flatten())
        {
            *acc += w * v;
        }
    }
    for (a, b) in mean.iter().zip(full.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn zero_scale_leaves_prior_gradient_only() {
    let (model, data) = random_problem(DataKind::Binary, 6);
    let state = state_for(&model, &data);
    let all: Vec<usize> = (0..data.len()).collect();
    let (value, g) = data_term_gradient(&model, &data, &all, &state.e_omega, &state, 0.0, false);
    assert_eq!(value, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn stationary_point_is_fixed() {
    let m0 = TRModel::new(vec![Core::zeros(1, 1, 1)], vec![vec![0.0]]).unwrap();
    let data = SparseTensor::new(vec![1], vec![(vec![0], 0.0)], DataKind::Continuous).unwrap();
    let mut m = m0.clone();
    let state = state_for(&m, &data);
    let mut adam = Adam::new(&m);
    let cfg = OnlineConfig {
        batch_size: 1,
        ..Default::default()
    };
    m_step(&mut m, &data, &[0], &state, &mut adam, &cfg, 0.01).unwrap();
    assert_eq!(m, m0);
}

#[test]
fn fixed_omega_iteration_reaches_logit_fixed_point() {
    // x = g · λ · h for a single entry. With E[ω] held at 1/4 and a heavily
    // weighted data term, ascent drives x to (y − 1/2) / E[ω] = 2.
    let cores = vec![
        Core::from_vec(1, 1, 1, vec![0.5]).unwrap(),
        Core::from_vec(1, 1, 1, vec![0.5]).unwrap(),
    ];
    let mut m = TRModel::new(cores, vec![vec![1.0], vec![1.0]]).unwrap();
    let data = SparseTensor::new(vec![1, 1], vec![(vec![0, 0], 1.0)], DataKind::Binary).unwrap();
    let mut state = VariationalState::new(&m.ranks(), DataKind::Binary, 2.0, 1.0, 1.0);
    state.e_omega = vec![0.25];
    let mut adam = Adam::new(&m);
    for _ in 0..5000 {
        let (_, g) = free_energy_gradient(&m, &data, &[0], &state.e_omega, &state, 1e4, 1.0, false);
        adam.ascend(&mut m, &g, 0.01);
    }
    let x = m.eval_entry(&[0, 0]).unwrap();
    assert!((x - 2.0).abs() < 1e-3, "x = {x}");
}

#[test]
fn full_batch_free_energy_is_monotone_for_small_steps() {
    let (mut model, data) = random_problem(DataKind::Binary, 7);
    let all: Vec<usize> = (0..data.len()).collect();
    let mut state = VariationalState::new(&model.ranks(), data.kind(), 2.0, 1.0, 0.3);
    e_step(&model, &data, &all, &mut state, 1.0).unwrap();
    let mut adam = Adam::new(&model);
    let f =
        |m: &TRModel, s: &VariationalState| free_energy(m, &data, &all, &s.e_omega, s, 1.0, 1.0);
    let mut last = f(&model, &state);
    for _ in 0..200 {
        let (_, g) =
            free_energy_gradient(&model, &data, &all, &state.e_omega, &state, 1.0, 1.0, false);
        adam.ascend(&mut model, &g, 1e-3);
        let now = f(&model, &state);
        assert!(now >= last - 1e-9, "{now} < {last}");
        last = now;
    }
}

#[test]
fn trainer_is_deterministic_and_resumable() {
    let (_, data) = random_problem(DataKind::Continuous, 8);
    let cfg = OnlineConfig {
        batch_size: 4,
        epochs: 6,
        rank: 2,
        seed: 3,
        ..Default::default()
    };
    let a = run_online(&data, cfg.clone()).unwrap();
    let b = run_online(&data, cfg.clone()).unwrap();
    assert_eq!(a, b);

    let mut t = OnlineTrainer::new(data.clone(), cfg).unwrap();
    for _ in 0..2 {
        t.run_epoch().unwrap();
    }
    let json = serde_json::to_string(&t.checkpoint()).unwrap();
    let mut resumed = OnlineTrainer::resume(data, serde_json::from_str(&json).unwrap()).unwrap();
    resumed.run().unwrap();
    assert_eq!(resumed.into_parts(), a);
}

#[test]
fn oversized_batch_rejected() {
    let (_, data) = random_problem(DataKind::Binary, 9);
    let cfg = OnlineConfig {
        batch_size: data.len() + 1,
        ..Default::default()
    };
    assert!(OnlineTrainer::new(data, cfg).is_err());
}
