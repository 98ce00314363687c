use ftrl_core::ddpg::{
    clamp_action, AgentModel, DdpgHyperparams, Experience, ModelBundle, OuNoise, ReplayBuffer,
    ACTION_EPSILON,
};
use ftrl_core::nn::{Matrix, ModelParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small_hyper(batch: usize) -> DdpgHyperparams {
    DdpgHyperparams {
        hidden_layers: vec![6, 5],
        batch_size: batch,
        buffer_capacity: 64,
        ..DdpgHyperparams::default()
    }
}

/// ReLU hidden layers, caller-chosen output squashing.
fn forward(params: &ModelParams, x: &[f64], tanh_out: bool) -> f64 {
    let mut h = x.to_vec();
    let last = params.layers.len() - 1;
    for (idx, l) in params.layers.iter().enumerate() {
        h = (0..l.outputs)
            .map(|o| {
                let z = l.bias[o]
                    + (0..l.inputs)
                        .map(|i| l.weights[o * l.inputs + i] * h[i])
                        .sum::<f64>();
                match (idx == last, tanh_out) {
                    (false, _) => z.max(0.0),
                    (true, true) => z.tanh(),
                    (true, false) => z,
                }
            })
            .collect();
    }
    h[0]
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Experience> {
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..10.0)).collect();
            let next: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..10.0)).collect();
            Experience::new(
                obs,
                rng.random_range(-0.99..0.99),
                rng.random_range(-150.0..8.0),
                next,
                rng.random_bool(0.3),
            )
            .unwrap()
        })
        .collect()
}

/// Mean squared TD error recomputed from the networks held before the step.
fn td_loss_oracle(nets: &ModelBundle, batch: &[Experience], gamma: f64) -> f64 {
    let mut total = 0.0;
    for e in batch {
        let next_a = forward(&nets.target_actor, &e.next_obs, true);
        let mut next_in = e.next_obs.clone();
        next_in.push(next_a);
        let next_q = forward(&nets.target_critic, &next_in, false);
        let y = e.reward + if e.bootstrap_cut { 0.0 } else { gamma * next_q };
        let mut sa = e.obs.clone();
        sa.push(e.action);
        let q = forward(&nets.critic, &sa, false);
        total += (q - y) * (q - y);
    }
    total / batch.len() as f64
}

#[test]
fn td_loss_matches_standalone_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let mut model = AgentModel::new(4, small_hyper(8), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 8, 4);
        let refs: Vec<&Experience> = batch.iter().collect();
        // Train a few times first so the targets differ from the online nets.
        for _ in 0..trial % 4 {
            model.train_step(&refs).unwrap();
        }
        let want = td_loss_oracle(model.networks(), &batch, 0.99);
        let got = model.train_step(&refs).unwrap().critic_loss;
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1.0),
            "trial {trial}: {got} vs {want}"
        );
    }
}

#[test]
fn frozen_quadratic_critic_pulls_every_action_toward_optimum() {
    for (seed, a_star) in [(1, 0.9), (2, -0.9), (3, 0.9), (4, -0.9)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = AgentModel::new(3, small_hyper(16), &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..3).map(|_| rng.random_range(0.5..5.0)).collect())
            .collect();
        let before: Vec<f64> = rows.iter().map(|s| model.policy(s).unwrap()).collect();
        assert!(before.iter().all(|a| (a - a_star).abs() > 0.05));
        let states = Matrix::from_vec(16, 3, rows.concat()).unwrap();
        // Loss -Q = (a - a*)^2, averaged over the batch.
        model
            .update_actor(&states, |out| {
                Ok(out
                    .as_slice()
                    .iter()
                    .map(|a| 2.0 * (a - a_star) / 16.0)
                    .collect())
            })
            .unwrap();
        for (s, b) in rows.iter().zip(&before) {
            let after = model.policy(s).unwrap();
            assert!(
                (after - a_star).abs() < (b - a_star).abs(),
                "seed {seed}: {b} -> {after}"
            );
        }
    }
}

#[test]
fn repeated_transition_drives_critic_loss_down() {
    let hyper = DdpgHyperparams {
        hidden_layers: vec![32, 32],
        batch_size: 4,
        buffer_capacity: 4,
        ..DdpgHyperparams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = AgentModel::new(6, hyper, &mut rng).unwrap();
    let e = Experience::new(vec![2.0; 6], 0.2, 1.5, vec![2.5; 6], true).unwrap();
    let batch = vec![&e; 4];
    let first = model.train_step(&batch).unwrap().critic_loss;
    let mut last = first;
    for _ in 0..2000 {
        last = model.train_step(&batch).unwrap().critic_loss;
    }
    assert!(last < 1e-3, "loss {first} -> {last}");
}

#[test]
fn ou_path_matches_scripted_recurrence() {
    let (theta, sigma, mu, dt) = (0.15, 0.2, 0.1, 0.5);
    let mut noise = OuNoise::new(theta, sigma, mu, dt, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut x = mu;
    for _ in 0..100 {
        let n: f64 = StandardNormal.sample(&mut rng);
        x = x + theta * (mu - x) * dt + sigma * dt.sqrt() * n;
        assert!((noise.sample() - x).abs() < 1e-12);
    }
    noise.reset();
    assert_eq!(noise.value(), mu);
}

#[test]
fn ou_defaults() {
    let n = OuNoise::with_defaults(0);
    assert_eq!((n.theta, n.sigma, n.mu, n.dt), (0.15, 0.2, 0.0, 1.0));
}

#[test]
fn fifo_eviction_exhaustive_for_capacity_five() {
    let mut buffer = ReplayBuffer::new(5, 0).unwrap();
    for i in 0..20 {
        buffer.record(Experience::new(vec![1.0], 0.0, i as f64, vec![1.0], false).unwrap());
        let held: Vec<f64> = buffer.iter().map(|e| e.reward).collect();
        let lo = (i as i64 - 4).max(0);
        let want: Vec<f64> = (lo..=i as i64).map(|r| r as f64).collect();
        assert_eq!(held, want);
    }
}

proptest! {
    #[test]
    fn clamped_actions_stay_strictly_inside(a in -1e6f64..1e6) {
        let c = clamp_action(a);
        prop_assert!(c.abs() < 1.0);
        prop_assert!(c.abs() <= 1.0 - ACTION_EPSILON);
    }

    #[test]
    fn explored_actions_stay_strictly_inside(seed in any::<u64>(), sigma in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = AgentModel::new(3, small_hyper(2), &mut rng).unwrap();
        let mut noise = OuNoise::new(0.15, sigma, 0.0, 1.0, seed);
        for _ in 0..20 {
            let a = model.act(&[1.0, 2.0, 3.0], &mut noise, true).unwrap();
            prop_assert!(a.abs() < 1.0);
        }
    }
}
