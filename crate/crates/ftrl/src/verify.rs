//! The verification suite behind `ftrl verify`: ten criteria, each checked
//! against an oracle written independently of the code under test.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ftrl_core::ddpg::{AgentModel, DdpgHyperparams, Experience, NetworkRole};
use ftrl_core::env::{compute_reward, Environment, BEAMS};
use ftrl_core::federation::{client_sync, fedavg, FederationServer, SyncOutcome};
use ftrl_core::nn::{mlp_backward, mlp_forward, Activation, MlpSpec, ModelParams};
use ftrl_core::transfer::TransferProfile;
use ftrl_core::wire::{decode_envelope, encode_envelope, MessageKind, ModelEnvelope, HEADER_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{initial_model, pretrain, run_from, RunSummary};
use crate::output::{read_rp_curve, read_step_log, rp_file, steps_file};
use crate::tracks::BuiltinTrack;

pub const NAMES: [&str; 10] = [
    "reward oracle equivalence",
    "gradient correctness",
    "fedavg oracle",
    "transfer invariants",
    "protocol round-trip",
    "staleness replay",
    "lockstep determinism",
    "single-transition convergence",
    "metric bounds",
    "federated smoke test",
];

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: u8,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionOutcome {
    pub fn name(&self) -> &'static str {
        NAMES[self.id as usize - 1]
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} [{:.1}s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name(),
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Where the training runs of criteria 7, 9 and 10 write their output.
    pub workdir: PathBuf,
    pub criteria: Vec<u8>,
    /// Seeds of the federated smoke test.
    pub smoke_seeds: Vec<u64>,
    /// Progress messages on stderr.
    pub progress: bool,
}

impl VerifyOptions {
    pub fn all(workdir: impl Into<PathBuf>) -> Self {
        Self {
            workdir: workdir.into(),
            criteria: (1..=10).collect(),
            smoke_seeds: (0..5).collect(),
            progress: false,
        }
    }
}

/// Runs the selected criteria and returns their outcomes sorted by id.
/// Criterion 9 inspects every run produced by 7 and 10; run alone it
/// produces one of its own.
pub fn run(opts: &VerifyOptions) -> Result<Vec<CriterionOutcome>> {
    std::fs::create_dir_all(&opts.workdir).map_err(|e| crate::Error::io(&opts.workdir, e))?;
    let wants = |id: u8| opts.criteria.contains(&id);
    let note = |msg: &str| {
        if opts.progress {
            eprintln!("verify: {msg}");
        }
    };
    let mut outcomes = Vec::new();
    let mut runs: Vec<PathBuf> = Vec::new();
    let cheap: [(u8, Check); 6] = [
        (1, reward_oracle),
        (2, gradient_check),
        (3, fedavg_oracle),
        (4, transfer_invariants),
        (5, protocol_round_trip),
        (6, staleness_replay),
    ];
    for (id, check) in cheap {
        if wants(id) {
            note(&format!("criterion {id}"));
            outcomes.push(timed(id, check));
        }
    }
    if wants(7) {
        note("criterion 7: two 3-agent runs of 7500 steps");
        let mut produced = Vec::new();
        outcomes.push(timed(7, || {
            lockstep_determinism(&opts.workdir, &mut produced)
        }));
        runs.extend(produced);
    }
    if wants(8) {
        note("criterion 8");
        outcomes.push(timed(8, single_transition_convergence));
    }
    if wants(10) {
        let mut produced = Vec::new();
        outcomes.push(timed(10, || {
            smoke_test(&opts.workdir, &opts.smoke_seeds, &mut produced, &note)
        }));
        runs.extend(produced);
    }
    if wants(9) {
        note("criterion 9");
        outcomes.push(timed(9, || metric_bounds(&opts.workdir, &runs)));
    }
    outcomes.sort_by_key(|o| o.id);
    Ok(outcomes)
}

type Check = fn() -> (bool, String);

fn budget(id: u8) -> Option<Duration> {
    let secs = match id {
        1 | 3 => 5,
        2 => 30,
        7 => 600,
        8 => 60,
        10 => 7200,
        _ => return None,
    };
    Some(Duration::from_secs(secs))
}

fn timed(id: u8, check: impl FnOnce() -> (bool, String)) -> CriterionOutcome {
    let start = Instant::now();
    let (mut passed, mut detail) = check();
    let elapsed = start.elapsed();
    if let Some(limit) = budget(id) {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
        }
    }
    CriterionOutcome {
        id,
        passed,
        detail,
        elapsed,
    }
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1.0)
}

// ---------------------------------------------------------------- 1

/// `8 - 60 * [min < 1.1] - 2^(7 - mean of the 12 smallest)`, by sorting.
fn reward_by_sorting(obs: &[f64]) -> f64 {
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted[..12].iter().sum::<f64>() / 12.0;
    let c = if sorted[0] < 1.1 { 1.0 } else { 0.0 };
    8.0 - 60.0 * c - (7.0 - m).exp2()
}

fn reward_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ftrl_core::env::RewardParams::default();
    let mut worst = 0.0f64;
    let mut collisions = 0;
    for i in 0..10_000 {
        let obs: Vec<f64> = match i % 3 {
            0 => (0..BEAMS).map(|_| rng.random_range(0.05..12.0)).collect(),
            1 => (0..BEAMS).map(|_| rng.random_range(0.9..1.4)).collect(),
            _ => (0..BEAMS).map(|_| rng.random_range(2.0..12.0)).collect(),
        };
        let got = match compute_reward(&obs, &params) {
            Ok(r) => r,
            Err(e) => return (false, format!("observation {i}: {e}")),
        };
        let want = reward_by_sorting(&obs);
        if want < -50.0 {
            collisions += 1;
        }
        let err = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(err);
        if err > 1e-12 {
            return (false, format!("observation {i}: {got} vs oracle {want}"));
        }
    }
    (
        true,
        format!("10000 observations ({collisions} in collision), worst relative error {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 2

/// Scalar-by-scalar forward pass.
fn longhand_forward(params: &ModelParams, spec: &MlpSpec, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = params.layers.len() - 1;
    for (idx, l) in params.layers.iter().enumerate() {
        let act = if idx == last {
            spec.output_activation()
        } else {
            spec.hidden_activation()
        };
        h = (0..l.outputs)
            .map(|o| {
                let z = l.bias[o]
                    + (0..l.inputs)
                        .map(|i| l.weights[o * l.inputs + i] * h[i])
                        .sum::<f64>();
                match act {
                    Activation::Relu => z.max(0.0),
                    Activation::Tanh => z.tanh(),
                    Activation::Linear => z,
                }
            })
            .collect();
    }
    h
}

fn random_spec(rng: &mut ChaCha8Rng, max_params: usize) -> MlpSpec {
    loop {
        let mut sizes = vec![rng.random_range(1..=4)];
        for _ in 0..rng.random_range(1..=2) {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(1..=2));
        let out = if rng.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Linear
        };
        let spec = MlpSpec::new(sizes, Activation::Relu, out).expect("positive sizes");
        if spec.param_count() <= max_params {
            return spec;
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, spec: &MlpSpec) -> ModelParams {
    let mut p = ModelParams::init(spec, rng);
    for l in &mut p.layers {
        for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *v = rng.random_range(-1.5..1.5);
        }
    }
    p
}

fn gradient_check() -> (bool, String) {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for net in 0..50 {
        let spec = random_spec(&mut rng, 64);
        let params = random_params(&mut rng, &spec);
        let x: Vec<f64> = (0..spec.input_dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let g: Vec<f64> = (0..spec.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        // Loss = g . y(x); its output gradient is g.
        let loss = |p: &ModelParams, x: &[f64]| -> f64 {
            longhand_forward(p, &spec, x)
                .iter()
                .zip(&g)
                .map(|(y, w)| y * w)
                .sum()
        };
        let (analytic, input_grad) = match mlp_forward(&params, &spec, &x)
            .and_then(|(_, cache)| mlp_backward(&params, &spec, &cache, &g))
        {
            Ok(r) => r,
            Err(e) => return (false, format!("network {net}: {e}")),
        };
        let flat = params.flatten();
        let analytic = analytic.flatten();
        let mut compare = |a: f64, n: f64, what: &str| -> Option<String> {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
            worst = worst.max(err);
            checked += 1;
            (err > 1e-5).then(|| format!("network {net} {what}: analytic {a} vs numeric {n}"))
        };
        for i in 0..flat.len() {
            let shifted = |d: f64| {
                let mut v = flat.clone();
                v[i] += d;
                ModelParams::unflatten(&v, &spec).expect("same length")
            };
            let numeric = (loss(&shifted(H), &x) - loss(&shifted(-H), &x)) / (2.0 * H);
            if let Some(m) = compare(analytic[i], numeric, &format!("parameter {i}")) {
                return (false, m);
            }
        }
        for i in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += H;
            down[i] -= H;
            let numeric = (loss(&params, &up) - loss(&params, &down)) / (2.0 * H);
            if let Some(m) = compare(input_grad[i], numeric, &format!("input {i}")) {
                return (false, m);
            }
        }
    }
    (
        true,
        format!("50 networks, {checked} partial derivatives, worst relative error {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn fedavg_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for set in 0..100 {
        let n = [1, 2, 3, 5][set % 4];
        let spec = random_spec(&mut rng, 64);
        let models: Vec<ModelParams> = (0..n)
            .map(|_| {
                let mut p = random_params(&mut rng, &spec);
                let scale = rng.random_range(0.01..100.0);
                for l in &mut p.layers {
                    l.weights.iter_mut().for_each(|v| *v *= scale);
                }
                p
            })
            .collect();
        let refs: Vec<&ModelParams> = models.iter().collect();
        let got = match fedavg(&refs) {
            Ok(m) => m.flatten(),
            Err(e) => return (false, format!("set {set}: {e}")),
        };
        let flats: Vec<Vec<f64>> = models.iter().map(|m| m.flatten()).collect();
        for (i, g) in got.iter().enumerate() {
            let want = flats.iter().map(|f| f[i]).sum::<f64>() / n as f64;
            worst = worst.max((g - want).abs() / want.abs().max(1.0));
            if !rel_close(*g, want, 1e-12) {
                return (
                    false,
                    format!("set {set} (N={n}) element {i}: {g} vs mean {want}"),
                );
            }
        }
        let same: Vec<&ModelParams> = (0..n).map(|_| &models[0]).collect();
        let avg = fedavg(&same).map(|m| m.flatten());
        let exact = avg.as_ref().is_ok_and(|a| {
            a.iter()
                .zip(&flats[0])
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
        if !exact {
            return (
                false,
                format!("set {set}: {n} identical models do not average to themselves"),
            );
        }
    }
    (
        true,
        format!(
            "100 sets, worst relative error {worst:.1e}; identical models reproduced bit for bit"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn transfer_invariants() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut exact_round_trips = 0;
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let beta = if i == 0 {
            6.67
        } else {
            rng.random_range(0.1..20.0)
        };
        let max_action = rng.random_range(0.05..1.5);
        let p = match TransferProfile::new("car", beta, max_action) {
            Ok(p) => p,
            Err(e) => return (false, e.to_string()),
        };
        let native: Vec<f64> = (0..BEAMS)
            .map(|_| rng.random_range(0.01..12.0 / beta))
            .collect();
        let back = p
            .transfer_observation(&native)
            .and_then(|s| p.inverse()?.transfer_observation(&s));
        let back = match back {
            Ok(b) => b,
            Err(e) => return (false, format!("input {i}: {e}")),
        };
        if back
            .iter()
            .zip(&native)
            .all(|(a, b)| a.to_bits() == b.to_bits())
        {
            exact_round_trips += 1;
        }
        for (a, b) in back.iter().zip(&native) {
            let err = (a - b).abs() / b.abs();
            worst = worst.max(err);
            if err > 1e-12 {
                return (false, format!("input {i}: round trip {b} -> {a}"));
            }
        }
        let a = rng.random_range(-0.999_999..0.999_999);
        match (p.transfer_action(a), p.transfer_action(-a)) {
            (Ok(x), Ok(y)) if y.to_bits() == (-x).to_bits() && x.abs() < max_action => {}
            (x, y) => {
                return (
                    false,
                    format!("input {i}: action {a} -> {x:?}, {} -> {y:?}", -a),
                )
            }
        }
    }
    let example =
        TransferProfile::new("car", 6.67, 0.5).and_then(|p| p.transfer_observation(&[1.0; BEAMS]));
    if example.as_deref() != Ok(&[6.67; BEAMS][..]) {
        return (false, format!("beta 6.67 on unit returns gave {example:?}"));
    }
    (
        true,
        format!(
            "1000 inputs: action map odd bit for bit; observation round trip within {worst:.1e} \
             ({exact_round_trips} of 1000 bit-exact); beta 6.67 maps 1.0 to 6.67"
        ),
    )
}

// ---------------------------------------------------------------- 5

const KINDS: [MessageKind; 5] = [
    MessageKind::PushModel,
    MessageKind::PullRequest,
    MessageKind::Snapshot,
    MessageKind::Ack,
    MessageKind::Error,
];

fn random_envelope(rng: &mut ChaCha8Rng) -> ModelEnvelope {
    let blocks = rng.random_range(0..4);
    let payload = (0..blocks)
        .map(|_| {
            let spec = random_spec(rng, 64);
            let role = NetworkRole::ALL[rng.random_range(0..4)];
            (role, random_params(rng, &spec))
        })
        .collect();
    ModelEnvelope::new(
        KINDS[rng.random_range(0..5)],
        rng.random(),
        rng.random(),
        payload,
    )
}

fn protocol_round_trip() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut envelopes = Vec::new();
    for i in 0..1000 {
        let env = random_envelope(&mut rng);
        let bytes = encode_envelope(&env);
        match decode_envelope(&bytes) {
            Ok(back) if back == env && encode_envelope(&back) == bytes => {}
            other => return (false, format!("envelope {i} did not round-trip: {other:?}")),
        }
        envelopes.push((env, bytes));
    }
    let (mut rejected, mut altered) = (0u64, 0u64);
    for (i, (env, bytes)) in envelopes.iter().take(50).enumerate() {
        for pos in 0..HEADER_LEN {
            for flip in 1..=255u8 {
                let mut b = bytes.clone();
                b[pos] ^= flip;
                let decoded = decode_envelope(&b);
                let structural = pos <= 4 || pos >= 14 || (pos == 5 && b[5] > 4);
                match decoded {
                    Err(_) => rejected += 1,
                    Ok(_) if structural => {
                        return (
                            false,
                            format!(
                                "envelope {i}: flipping byte {pos} by {flip:#04x} went unnoticed"
                            ),
                        );
                    }
                    Ok(d) if d != *env => altered += 1,
                    Ok(_) => {
                        return (
                            false,
                            format!("envelope {i}: byte {pos} flip decoded to the original"),
                        )
                    }
                }
            }
        }
    }
    (
        true,
        format!(
            "1000 envelopes bit-exact; 50 x 22 header bytes x 255 flips: {rejected} rejected \
             (every magic/version/length/invalid-kind flip), {altered} decode to a visibly \
             different kind/agent/round"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn staleness_replay() -> (bool, String) {
    let outcome = (|| -> ftrl_core::Result<(bool, String)> {
        let hyper = DdpgHyperparams {
            hidden_layers: vec![32, 32],
            batch_size: 8,
            buffer_capacity: 64,
            ..DdpgHyperparams::default()
        };
        let track = BuiltinTrack::Loop.standard();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut agent = |seed| -> ftrl_core::Result<_> {
            let env = Environment::new(track.clone(), Default::default(), seed)?;
            let model = AgentModel::new(BEAMS, hyper.clone(), &mut rng)?;
            ftrl_core::runner::AgentRunner::new(
                seed as u32,
                env,
                TransferProfile::standard("std", 0.5)?,
                model,
                ftrl_core::ddpg::ReplayBuffer::new(64, seed)?,
                ftrl_core::ddpg::OuNoise::with_defaults(seed),
                ftrl_core::runner::RunnerConfig {
                    sync_cycle: None,
                    ..Default::default()
                },
            )
        };
        let (mut a, mut b) = (agent(0)?, agent(1)?);
        let mut server = FederationServer::new();
        let (mut held_a, mut held_b) = (0, 0);
        // Both agents learn a little before t0.
        a.run(20, None)?;
        b.run(20, None)?;
        // t0: synchronizations push the local models.
        client_sync(0, a.model_mut(), &mut held_a, &mut server)?;
        client_sync(1, b.model_mut(), &mut held_b, &mut server)?;
        // t_fed: aggregation.
        server.federate(1.0)?;
        let snapshot = server.latest().expect("a round exists");
        // (t_fed, t1): agent A keeps training locally.
        let before = a.stats().train_steps;
        a.run(40, None)?;
        let local_steps = a.stats().train_steps - before;
        if local_steps == 0 || a.model().networks() == &snapshot.networks {
            return Ok((
                false,
                "agent A did not move away from the snapshot between t_fed and t1".into(),
            ));
        }
        // t1: synchronization.
        let sync = client_sync(0, a.model_mut(), &mut held_a, &mut server)?;
        let bits = |m: &ftrl_core::ddpg::ModelBundle| -> Vec<u64> {
            NetworkRole::ALL
                .iter()
                .flat_map(|r| m.get(*r).flatten())
                .map(f64::to_bits)
                .collect()
        };
        let equal = bits(a.model().networks()) == bits(&snapshot.networks);
        Ok((
            sync == SyncOutcome::Adopted(1) && equal,
            format!(
                "{local_steps} local train steps in (t_fed, t1) discarded; sync at t1 returned {sync:?}; \
                 params equal the t_fed snapshot bit for bit: {equal}"
            ),
        ))
    })();
    outcome.unwrap_or_else(|e| (false, e.to_string()))
}

// ---------------------------------------------------------------- 7

fn car_roster(ids: &[u32]) -> String {
    ids.iter()
        .map(|id| format!("[agent.{id}]\ntrack = builtin:loop\nbeta = 6.67\n"))
        .collect()
}

fn lockstep_config(out: &Path) -> Result<ExperimentConfig> {
    let text = format!(
        "[experiment]\nscenario = ftrl\nsteps = 7500\nseed = 7\n\
         [federation]\nfederation_cycle = 480\nsync_cycle = 720\n\
         [eval]\ncycles = 0\n{}",
        car_roster(&[1, 2, 3])
    );
    let mut cfg = ExperimentConfig::parse(&text, Path::new("."), "lockstep")?;
    cfg.output = out.to_path_buf();
    Ok(cfg)
}

fn dir_bytes(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path())?,
        ));
    }
    files.sort();
    Ok(files)
}

fn lockstep_determinism(workdir: &Path, produced: &mut Vec<PathBuf>) -> (bool, String) {
    let mut summaries: Vec<RunSummary> = Vec::new();
    for tag in ["a", "b"] {
        let dir = workdir.join(format!("lockstep_{tag}"));
        let _ = std::fs::remove_dir_all(&dir);
        let run = lockstep_config(&dir).and_then(|cfg| {
            let start = initial_model(&cfg)?.networks().clone();
            run_from(&cfg, &start)
        });
        match run {
            Ok(s) => summaries.push(s),
            Err(e) => return (false, format!("run {tag}: {e}")),
        }
        produced.push(dir);
    }
    let (a, b) = match (dir_bytes(&produced[0]), dir_bytes(&produced[1])) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
    };
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let logs_present = (1..=3).all(|id| names.contains(&steps_file(id).as_str()));
    // The first pushes happen at step 720, so aggregation ticks at multiples
    // of 480 produce a round from 960 on.
    let expected_rounds = (1..=7500 / 480).filter(|k| k * 480 >= 720).count();
    let rounds = summaries[0].rounds.len();
    let passed =
        a.len() == b.len() && differing.is_empty() && logs_present && rounds == expected_rounds;
    (
        passed,
        format!(
            "{} files compared, {} differ; {rounds} federation rounds (schedule predicts {expected_rounds})",
            a.len(),
            differing.len() + a.len().abs_diff(b.len())
        ),
    )
}

// ---------------------------------------------------------------- 8

fn single_transition_convergence() -> (bool, String) {
    let outcome = (|| -> ftrl_core::Result<(bool, String)> {
        let hyper = DdpgHyperparams::default();
        let mut env = Environment::new(BuiltinTrack::Loop.standard(), Default::default(), 8)?;
        let obs = env.observation().as_slice().to_vec();
        let step = env.step(0.1)?;
        let next = step.observation.as_slice().to_vec();
        let mut report = Vec::new();
        let mut passed = true;
        for cut in [true, false] {
            let mut model =
                AgentModel::new(BEAMS, hyper.clone(), &mut ChaCha8Rng::seed_from_u64(8))?;
            let e = Experience::new(obs.clone(), 0.2, step.reward, next.clone(), cut)?;
            let batch = vec![&e; hyper.batch_size];
            let mut first_below = None;
            let mut last = f64::NAN;
            for i in 1..=2000 {
                last = model.train_step(&batch)?.critic_loss;
                if last < 1e-3 && first_below.is_none() {
                    first_below = Some(i);
                }
            }
            let ok = if cut {
                last < 1e-3
            } else {
                first_below.is_some()
            };
            passed &= ok;
            report.push(format!(
                "{}: loss below 1e-3 from step {}, {last:.1e} at step 2000",
                if cut { "terminal" } else { "bootstrapped" },
                first_below.map_or("never".to_string(), |s| s.to_string())
            ));
        }
        Ok((passed, report.join("; ")))
    })();
    outcome.unwrap_or_else(|e| (false, e.to_string()))
}

// ---------------------------------------------------------------- 9

fn metric_bounds(workdir: &Path, runs: &[PathBuf]) -> (bool, String) {
    let mut runs = runs.to_vec();
    if runs.is_empty() {
        let dir = workdir.join("metric_run");
        let _ = std::fs::remove_dir_all(&dir);
        let text = format!(
            "[experiment]\nscenario = solo\nsteps = 7500\n[eval]\ncycles = 0\n{}",
            car_roster(&[1])
        );
        let run = ExperimentConfig::parse(&text, Path::new("."), "metric").and_then(|mut cfg| {
            cfg.output = dir.clone();
            crate::experiment::run_experiment(&cfg)
        });
        if let Err(e) = run {
            return (false, e.to_string());
        }
        runs.push(dir);
    }
    let stages = ftrl_core::metrics::StageConfig::default();
    let ((a0, a1), (b0, b1)) = stages.time_windows(0.25);
    if (a0, a1, b0, b1) != (625.0, 1250.0, 1250.0, 1875.0) {
        return (false, format!("stage windows [{a0}, {a1}) / [{b0}, {b1})"));
    }
    let mut curves = 0;
    let mut values = 0;
    for dir in &runs {
        for id in 0..16 {
            let steps_path = dir.join(steps_file(id));
            if !steps_path.exists() {
                continue;
            }
            match check_run_agent(&steps_path, &dir.join(rp_file(id))) {
                Ok(n) => values += n,
                Err(m) => return (false, format!("{}: {m}", steps_path.display())),
            }
            curves += 1;
        }
    }
    (
        curves > 0,
        format!(
            "{} runs, {curves} rp curves, {values} values all in [-1, 1] and equal to a recomputation \
             from the step logs; windows [625 s, 1250 s) / [1250 s, 1875 s) in config and logs",
            runs.len()
        ),
    )
}

/// Checks one agent's log and curve; returns the number of rp values.
fn check_run_agent(steps: &Path, curve: &Path) -> std::result::Result<usize, String> {
    let log = read_step_log(steps).map_err(|e| e.to_string())?;
    if log.len() < 7500 {
        return Err(format!("only {} steps", log.len()));
    }
    // Stage I is steps 2500..5000, stage II 5000..7500, 0.25 s per step.
    let t = |i: usize| log[i].sim_time_s;
    if t(2500) != 625.0 || t(4999) + 0.25 != 1250.0 || t(5000) != 1250.0 || t(7499) + 0.25 != 1875.0
    {
        return Err(format!(
            "step times {}, {}, {}, {} do not bound [625, 1250) / [1250, 1875)",
            t(2500),
            t(4999),
            t(5000),
            t(7499)
        ));
    }
    let rewards: Vec<f64> = log.iter().map(|r| r.reward).collect();
    let r_max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let r_min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    let rows = read_rp_curve(curve).map_err(|e| e.to_string())?;
    if r_max == r_min {
        return if rows.is_empty() {
            Ok(0)
        } else {
            Err("constant rewards but a non-empty rp curve".into())
        };
    }
    if rows.len() != 2500 {
        return Err(format!("rp curve has {} rows", rows.len()));
    }
    let mut cumsum = 0.0;
    for (i, (step, rp, c)) in rows.iter().enumerate() {
        let want = (rewards[5000 + i] - rewards[2500 + i]) / (r_max - r_min);
        cumsum += want;
        if *step != i + 1
            || !(-1.0..=1.0).contains(rp)
            || (rp - want).abs() > 1e-12
            || (c - cumsum).abs() > 1e-9
        {
            return Err(format!(
                "row {}: ({step}, {rp}, {c}), expected rp {want}, cumsum {cumsum}",
                i + 1
            ));
        }
    }
    Ok(rows.len())
}

// ---------------------------------------------------------------- 10

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Arm {
    Solo,
    Ftrl,
    FtrlSim,
}

impl Arm {
    const ALL: [Arm; 3] = [Arm::Solo, Arm::Ftrl, Arm::FtrlSim];

    fn name(self) -> &'static str {
        match self {
            Arm::Solo => "solo",
            Arm::Ftrl => "ftrl",
            Arm::FtrlSim => "ftrl_sim",
        }
    }

    /// Agent ids of the cars; the analog, when present, is agent 0.
    fn cars(self) -> &'static [u32] {
        match self {
            Arm::FtrlSim => &[1, 2],
            _ => &[1, 2, 3],
        }
    }
}

fn smoke_config(arm: Arm, seed: u64, out: &Path) -> Result<ExperimentConfig> {
    let mut text = format!(
        "[experiment]\nscenario = {}\nsteps = 7500\nseed = {seed}\ntrain_gate = full\n\
         [pretrain]\ntrack = builtin:loop\nsteps = 5000\n\
         [eval]\ncycles = 0\n",
        arm.name()
    );
    if arm == Arm::FtrlSim {
        text.push_str("[agent.0]\ntrack = builtin:loop\nstandard = true\n");
    }
    text.push_str(&car_roster(arm.cars()));
    let mut cfg = ExperimentConfig::parse(&text, Path::new("."), "smoke")?;
    cfg.output = out.to_path_buf();
    Ok(cfg)
}

/// Stage II collisions of each listed car.
fn car_stage_two(summary: &RunSummary, cars: &[u32]) -> std::result::Result<Vec<f64>, String> {
    cars.iter()
        .map(|id| {
            let agent = summary
                .agents
                .iter()
                .find(|a| a.id == *id)
                .ok_or_else(|| format!("agent {id} missing"))?;
            Ok(agent.stage_collisions.ok_or("run too short for stage II")?[1] as f64)
        })
        .collect()
}

fn smoke_test(
    workdir: &Path,
    seeds: &[u64],
    produced: &mut Vec<PathBuf>,
    note: &dyn Fn(&str),
) -> (bool, String) {
    if seeds.is_empty() {
        return (false, "no seeds".into());
    }
    // Per seed and arm: mean over that arm's cars, and over the cars every
    // arm has.
    let mut per_arm: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut common: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let shared = Arm::FtrlSim.cars();
    for &seed in seeds {
        let start = match smoke_config(Arm::Solo, seed, workdir).and_then(|cfg| pretrain(&cfg)) {
            Ok(Some(p)) => p.networks,
            Ok(None) => return (false, "pretraining is not configured".into()),
            Err(e) => return (false, format!("seed {seed}: {e}")),
        };
        for (k, arm) in Arm::ALL.into_iter().enumerate() {
            note(&format!("criterion 10: seed {seed}, {}", arm.name()));
            let dir = workdir.join(format!("smoke_{}_seed{seed}", arm.name()));
            let _ = std::fs::remove_dir_all(&dir);
            let counts = smoke_config(arm, seed, &dir)
                .and_then(|cfg| run_from(&cfg, &start))
                .map_err(|e| e.to_string())
                .and_then(|s| car_stage_two(&s, arm.cars()));
            match counts {
                Ok(c) => {
                    per_arm[k].push(mean(&c));
                    common[k].push(mean(&c[..shared.len()]));
                }
                Err(e) => return (false, format!("seed {seed} {}: {e}", arm.name())),
            }
            produced.push(dir);
        }
    }
    let (solo, ftrl, sim) = (mean(&per_arm[0]), mean(&per_arm[1]), mean(&per_arm[2]));
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.1}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    (
        ftrl <= solo && sim <= ftrl,
        format!(
            "mean stage-II collisions per car over seeds {seeds:?}: solo {solo:.2} [{}], ftrl {ftrl:.2} [{}], \
             ftrl_sim {sim:.2} [{}]; need ftrl <= solo ({}) and ftrl_sim <= ftrl ({}); \
             cars {shared:?} only: solo {:.2}, ftrl {:.2}, ftrl_sim {:.2}",
            fmt(&per_arm[0]),
            fmt(&per_arm[1]),
            fmt(&per_arm[2]),
            ftrl <= solo,
            sim <= ftrl,
            mean(&common[0]),
            mean(&common[1]),
            mean(&common[2]),
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
