use std::sync::Arc;

use ftrl_core::ddpg::{
    AgentModel, DdpgHyperparams, Experience, ModelBundle, OuNoise, ReplayBuffer, TrainGate,
};
use ftrl_core::env::{EnvConfig, Environment, Polygon, Pose, Track, Vec2};
use ftrl_core::federation::{
    client_sync, fedavg, fedavg_tagged, AgentId, FederationLink, FederationServer,
    FederationSnapshot, SyncOutcome,
};
use ftrl_core::nn::{Activation, MlpSpec, ModelParams};
use ftrl_core::runner::{run_lockstep, AgentRunner, RunnerConfig};
use ftrl_core::transfer::TransferProfile;
use ftrl_core::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean_oracle(models: &[ModelParams]) -> Vec<f64> {
    let flats: Vec<Vec<f64>> = models.iter().map(|m| m.flatten()).collect();
    (0..flats[0].len())
        .map(|i| flats.iter().map(|f| f[i]).sum::<f64>() / flats.len() as f64)
        .collect()
}

fn random_models(seed: u64, n: usize) -> Vec<ModelParams> {
    let spec = MlpSpec::new(vec![4, 7, 3], Activation::Relu, Activation::Tanh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut m = ModelParams::init(&spec, &mut rng);
            for v in m.layers[0].weights.iter_mut() {
                *v *= rng.random_range(0.1..100.0);
            }
            m
        })
        .collect()
}

proptest! {
    #[test]
    fn fedavg_matches_elementwise_mean(seed in any::<u64>(), n in prop::sample::select(vec![1usize, 2, 3, 5])) {
        let models = random_models(seed, n);
        let refs: Vec<&ModelParams> = models.iter().collect();
        let got = fedavg(&refs).unwrap().flatten();
        for (g, w) in got.iter().zip(mean_oracle(&models)) {
            prop_assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn fedavg_ignores_list_order(seed in any::<u64>(), n in 2usize..6) {
        let models = random_models(seed, n);
        let tagged: Vec<(AgentId, &ModelParams)> = models.iter().enumerate().map(|(i, m)| (i as AgentId, m)).collect();
        let mut shuffled = tagged.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(fedavg_tagged(&tagged).unwrap(), fedavg_tagged(&shuffled).unwrap());
    }

    #[test]
    fn identical_models_average_to_themselves(seed in any::<u64>(), n in 1usize..9) {
        let m = random_models(seed, 1).remove(0);
        let refs: Vec<&ModelParams> = (0..n).map(|_| &m).collect();
        prop_assert_eq!(fedavg(&refs).unwrap(), m);
    }
}

#[test]
fn duplicate_agents_are_rejected() {
    let models = random_models(1, 2);
    let err = fedavg_tagged(&[(4, &models[0]), (4, &models[1])]).unwrap_err();
    assert!(matches!(err, Error::Aggregation { agent: 4, .. }));
}

fn hyper() -> DdpgHyperparams {
    DdpgHyperparams {
        hidden_layers: vec![8],
        batch_size: 4,
        buffer_capacity: 32,
        ..DdpgHyperparams::default()
    }
}

fn model(seed: u64) -> AgentModel {
    AgentModel::new(60, hyper(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn train_a_little(model: &mut AgentModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<Experience> = (0..4)
        .map(|_| {
            let obs: Vec<f64> = (0..60).map(|_| rng.random_range(1.0..9.0)).collect();
            Experience::new(obs.clone(), 0.3, 2.0, obs, false).unwrap()
        })
        .collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    for _ in 0..5 {
        model.train_step(&refs).unwrap();
    }
}

#[test]
fn staleness_local_updates_after_federation_are_discarded_at_sync() {
    let mut server = FederationServer::new();
    let mut a = model(1);
    let mut b = model(2);
    let (mut held_a, mut held_b) = (0, 0);

    // t0: both agents sync (push, nothing to pull yet).
    assert_eq!(
        client_sync(0, &mut a, &mut held_a, &mut server).unwrap(),
        SyncOutcome::Unchanged(0)
    );
    assert_eq!(
        client_sync(1, &mut b, &mut held_b, &mut server).unwrap(),
        SyncOutcome::Unchanged(0)
    );
    // t_fed: the server aggregates what it holds.
    server.federate(1.0).unwrap();
    let snapshot = server.latest().unwrap();
    // (t_fed, t1): agent A keeps learning locally.
    train_a_little(&mut a, 9);
    assert_ne!(a.networks(), &snapshot.networks);
    // t1: sync. The local progress is pushed but overwritten by the snapshot.
    assert_eq!(
        client_sync(0, &mut a, &mut held_a, &mut server).unwrap(),
        SyncOutcome::Adopted(1)
    );
    assert_eq!(a.networks(), &snapshot.networks);
    assert_eq!(server.round(), 1);
}

#[test]
fn second_sync_without_federation_is_a_noop() {
    let mut server = FederationServer::new();
    let mut a = model(1);
    let mut held = 0;
    client_sync(0, &mut a, &mut held, &mut server).unwrap();
    server.federate(1.0).unwrap();
    client_sync(0, &mut a, &mut held, &mut server).unwrap();
    let after_first = a.networks().clone();
    assert_eq!(
        client_sync(0, &mut a, &mut held, &mut server).unwrap(),
        SyncOutcome::Unchanged(1)
    );
    assert_eq!(a.networks(), &after_first);
}

/// Serves a scripted sequence of snapshots regardless of pushes.
struct Scripted(Vec<Arc<FederationSnapshot>>);

impl FederationLink for Scripted {
    fn exchange(&mut self, _: AgentId, _: &ModelBundle) -> Result<Option<Arc<FederationSnapshot>>> {
        Ok(Some(self.0.remove(0)))
    }
}

#[test]
fn client_never_adopts_an_older_round() {
    let snap = |round, seed| {
        Arc::new(FederationSnapshot {
            round,
            networks: model(seed).networks().clone(),
            created_at: 0.0,
        })
    };
    let mut link = Scripted(vec![snap(3, 30), snap(2, 20), snap(3, 31), snap(4, 40)]);
    let mut a = model(0);
    let mut held = 0;
    assert_eq!(
        client_sync(0, &mut a, &mut held, &mut link).unwrap(),
        SyncOutcome::Adopted(3)
    );
    let after = a.networks().clone();
    assert_eq!(
        client_sync(0, &mut a, &mut held, &mut link).unwrap(),
        SyncOutcome::Unchanged(3)
    );
    assert_eq!(
        client_sync(0, &mut a, &mut held, &mut link).unwrap(),
        SyncOutcome::Unchanged(3)
    );
    assert_eq!(a.networks(), &after);
    assert_eq!(
        client_sync(0, &mut a, &mut held, &mut link).unwrap(),
        SyncOutcome::Adopted(4)
    );
    assert_eq!(a.networks(), model(40).networks());
}

#[test]
fn pull_before_any_round_signals_empty() {
    let mut server = FederationServer::new();
    assert_eq!(server.federate(5.0).unwrap(), None);
    assert_eq!(server.round(), 0);
    assert!(server.latest().is_none());
}

fn loop_track() -> Track {
    let outer = Polygon::rectangle(Vec2::new(-20.0, -20.0), Vec2::new(20.0, 20.0)).unwrap();
    let inner = Polygon::rectangle(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)).unwrap();
    Track::new(
        outer,
        vec![inner],
        vec![Pose::new(15.0, 0.0, std::f64::consts::FRAC_PI_2)],
        "std",
        None,
    )
    .unwrap()
}

fn runner(id: AgentId, seed: u64, sync_cycle: Option<f64>, train_gate: TrainGate) -> AgentRunner {
    let env = Environment::new(loop_track(), EnvConfig::default(), seed).unwrap();
    let profile = TransferProfile::standard("std", 0.5).unwrap();
    let config = RunnerConfig {
        train_gate,
        sync_cycle,
        explore: true,
    };
    AgentRunner::new(
        id,
        env,
        profile,
        model(seed),
        ReplayBuffer::new(32, seed).unwrap(),
        OuNoise::with_defaults(seed),
        config,
    )
    .unwrap()
}

#[test]
fn ten_solo_steps_fill_log_and_buffer() {
    let mut r = runner(0, 3, None, TrainGate::Batch);
    let log = r.run(10, None).unwrap();
    assert_eq!(log.len(), 10);
    assert_eq!(r.buffer().len(), 10);
    assert_eq!(
        log.iter().map(|s| s.step).collect::<Vec<_>>(),
        (0..10).collect::<Vec<_>>()
    );
    assert_eq!(log[4].sim_time_s, 1.0);
}

struct Counting {
    server: FederationServer,
    calls: usize,
}

impl FederationLink for Counting {
    fn exchange(
        &mut self,
        agent: AgentId,
        local: &ModelBundle,
    ) -> Result<Option<Arc<FederationSnapshot>>> {
        self.calls += 1;
        self.server.exchange(agent, local)
    }
}

#[test]
fn sync_fires_on_the_sync_cycle() {
    let mut r = runner(0, 3, Some(5.0), TrainGate::Batch);
    let mut link = Counting {
        server: FederationServer::new(),
        calls: 0,
    };
    let mut fired = Vec::new();
    for step in 1..=12 {
        let before = link.calls;
        r.step(Some(&mut link)).unwrap();
        if link.calls > before {
            fired.push(step);
        }
    }
    assert_eq!(fired, vec![5, 10]);
}

#[test]
fn adopted_snapshot_is_bitwise_equal() {
    // The full-buffer gate keeps the agent from training during these steps.
    let mut r = runner(0, 3, Some(5.0), TrainGate::Full);
    let mut server = FederationServer::new();
    server.push(7, model(70).networks().clone()).unwrap();
    server.federate(0.0).unwrap();
    let log = r.run(5, Some(&mut server)).unwrap();
    assert_eq!(log[4].synced, Some(1));
    assert_eq!(r.model().networks(), &server.latest().unwrap().networks);
    assert_eq!(r.held_round(), 1);
}

#[test]
fn lockstep_runs_are_reproducible() {
    let run = || {
        let mut agents: Vec<AgentRunner> = (0..3)
            .map(|i| runner(i, 10 + i as u64, Some(30.0), TrainGate::Batch))
            .collect();
        let mut server = FederationServer::new();
        run_lockstep(&mut agents, Some(&mut server), 20.0, 120).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let rounds: Vec<f64> = a.rounds.iter().map(|r| r.at).collect();
    // First pushes happen at tick 30, so the tick-20 federation is skipped.
    assert_eq!(rounds, vec![40.0, 60.0, 80.0, 100.0, 120.0]);
    assert_eq!(
        a.logs.iter().map(Vec::len).collect::<Vec<_>>(),
        vec![120; 3]
    );
}
