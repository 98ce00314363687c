//! Scenario orchestration: shared initialization, optional pretraining,
//! the training run under either clock, artifacts and evaluation.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ftrl_core::ddpg::{AgentModel, ModelBundle, OuNoise, ReplayBuffer};
use ftrl_core::env::{Environment, BEAMS};
use ftrl_core::federation::{AgentId, ClockMode, FederationLink, FederationServer, RoundRecord};
use ftrl_core::metrics::{evaluate_policy, EvalOutcome};
use ftrl_core::runner::{run_lockstep_with, AgentRunner, RunnerConfig, StepRecord};
use ftrl_core::transfer::TransferProfile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AgentSpec, ExperimentConfig};
use crate::error::{Error, Result};
use crate::net::{resolve_address, ServerHandle, TcpLink};
use crate::output::{
    model_file, rp_file, save_model, steps_file, write_eval_report, write_rp_curve,
    write_server_log, write_status, EvalRow, StepLog,
};

const BUFFER_SALT: u64 = 0x6275_6666_6572;
const NOISE_SALT: u64 = 0x6e_6f69_7365;
const EVAL_SALT: u64 = 0x6576_616c;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSummary {
    pub id: AgentId,
    pub steps: u64,
    pub collisions: u64,
    /// Collisions inside the stage I and stage II windows, when the run
    /// covers both.
    pub stage_collisions: Option<[u64; 2]>,
    pub train_steps: u64,
    pub adopted_rounds: u64,
    pub unavailable_syncs: u64,
    pub eval: Option<EvalOutcome>,
    /// Why the rp curve is empty, if it is.
    pub rp_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub output: PathBuf,
    pub agents: Vec<AgentSummary>,
    pub rounds: Vec<RoundRecord>,
}

/// The shared random initialization, drawn from the experiment seed.
pub fn initial_model(cfg: &ExperimentConfig) -> Result<AgentModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(AgentModel::new(BEAMS, cfg.ddpg.clone(), &mut rng)?)
}

fn make_runner(
    cfg: &ExperimentConfig,
    id: AgentId,
    env: Environment,
    profile: TransferProfile,
    networks: &ModelBundle,
    seed: u64,
    sync_cycle: Option<f64>,
) -> Result<AgentRunner> {
    let model = AgentModel::from_networks(BEAMS, cfg.ddpg.clone(), networks.clone())?;
    let runner = AgentRunner::new(
        id,
        env,
        profile,
        model,
        ReplayBuffer::new(cfg.ddpg.buffer_capacity, seed ^ BUFFER_SALT)?,
        OuNoise::new(cfg.ou_theta, cfg.ou_sigma, 0.0, 1.0, seed ^ NOISE_SALT),
        RunnerConfig {
            train_gate: cfg.train_gate,
            sync_cycle,
            explore: true,
        },
    )?;
    Ok(runner)
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub networks: ModelBundle,
    pub log: Vec<StepRecord>,
}

/// Trains one agent on the pretrain course, starting from
/// [`initial_model`]. `None` without a `[pretrain]` section.
pub fn pretrain(cfg: &ExperimentConfig) -> Result<Option<Pretrained>> {
    let Some(spec) = &cfg.pretrain else {
        return Ok(None);
    };
    let seed = cfg.pretrain_seed();
    let start = initial_model(cfg)?;
    let env_cfg = cfg.env.scaled(spec.profile.beta());
    let env = Environment::new(spec.track.clone(), env_cfg, seed)?;
    let mut runner = make_runner(
        cfg,
        0,
        env,
        spec.profile.clone(),
        start.networks(),
        seed,
        None,
    )?;
    let log = runner
        .run(spec.steps, None)
        .map_err(|source| Error::Pretrain { seed, source })?;
    Ok(Some(Pretrained {
        networks: runner.model().networks().clone(),
        log,
    }))
}

/// Pretrained networks when configured, else the shared initialization.
pub fn starting_networks(cfg: &ExperimentConfig) -> Result<ModelBundle> {
    match pretrain(cfg)? {
        Some(p) => Ok(p.networks),
        None => Ok(initial_model(cfg)?.networks().clone()),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let start = starting_networks(cfg)?;
    run_from(cfg, &start)
}

fn agent_env(cfg: &ExperimentConfig, spec: &AgentSpec) -> Result<Environment> {
    Ok(Environment::new(
        spec.track.clone(),
        cfg.agent_env(spec),
        cfg.agent_seed(spec),
    )?)
}

/// Per-agent record of what happened, kept alongside the streamed log.
#[derive(Default)]
struct Tally {
    rewards: Vec<f64>,
    collided: Vec<bool>,
}

impl Tally {
    fn push(&mut self, r: &StepRecord) {
        self.rewards.push(r.reward);
        self.collided.push(r.collided);
    }
}

/// Trains every agent from `start` and writes all artifacts into
/// `cfg.output`. On failure the partial step logs stay on disk and the
/// status file records the error.
pub fn run_from(cfg: &ExperimentConfig, start: &ModelBundle) -> Result<RunSummary> {
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let outcome = match cfg.clock {
        ClockMode::Virtual => run_virtual(cfg, start),
        ClockMode::Wall => run_wall(cfg, start),
    };
    match outcome.and_then(|(runners, tallies, rounds)| finish(cfg, runners, tallies, rounds)) {
        Ok(summary) => {
            write_status(out, "completed")?;
            Ok(summary)
        }
        Err(e) => {
            write_status(out, &format!("failed: {e}"))?;
            Err(e)
        }
    }
}

type RunParts = (Vec<AgentRunner>, Vec<Tally>, Vec<RoundRecord>);

fn run_virtual(cfg: &ExperimentConfig, start: &ModelBundle) -> Result<RunParts> {
    let fed = cfg.federation();
    let sync = cfg.scenario.federated().then_some(fed.sync_cycle);
    let mut runners = cfg
        .agents
        .iter()
        .map(|a| {
            make_runner(
                cfg,
                a.id,
                agent_env(cfg, a)?,
                a.profile.clone(),
                start,
                cfg.agent_seed(a),
                sync,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut logs = runners
        .iter()
        .map(|r| StepLog::create(&cfg.output.join(steps_file(r.id()))))
        .collect::<Result<Vec<_>>>()?;
    let mut tallies: Vec<Tally> = runners.iter().map(|_| Tally::default()).collect();
    let mut server = cfg.scenario.federated().then(FederationServer::new);

    let mut write_error = None;
    let result = run_lockstep_with(
        &mut runners,
        server.as_mut(),
        fed.federation_cycle,
        cfg.steps,
        &mut |i, rec| {
            tallies[i].push(rec);
            logs[i].write(rec).map_err(|e| {
                let msg = e.to_string();
                write_error = Some(e);
                ftrl_core::Error::Validation(msg)
            })
        },
    );
    for log in &mut logs {
        log.flush()?;
    }
    if let Some(server) = &server {
        write_server_log(&cfg.output.join("server_log.csv"), server.history())?;
    }
    if let Some(e) = write_error {
        return Err(e);
    }
    let rounds = result?;
    Ok((runners, tallies, rounds))
}

fn run_wall(cfg: &ExperimentConfig, start: &ModelBundle) -> Result<RunParts> {
    let fed = cfg.federation();
    let server = if cfg.scenario.federated() {
        let bind = resolve_address(&cfg.address);
        Some(ServerHandle::start(
            &bind,
            Duration::from_secs_f64(fed.federation_cycle),
        )?)
    } else {
        None
    };
    let addr = server.as_ref().map(|s| s.addr().to_string());
    let sync = server.as_ref().map(|_| fed.sync_cycle);
    let step_period = if cfg.pace > 0.0 {
        Some(Duration::from_secs_f64(cfg.env.dt / cfg.pace))
    } else {
        None
    };

    let runners = cfg
        .agents
        .iter()
        .map(|a| {
            make_runner(
                cfg,
                a.id,
                agent_env(cfg, a)?,
                a.profile.clone(),
                start,
                cfg.agent_seed(a),
                sync,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let clock = Instant::now();
    let results: Vec<Result<(AgentRunner, Tally)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runners
            .into_iter()
            .map(|mut runner| {
                let addr = addr.clone();
                let path = cfg.output.join(steps_file(runner.id()));
                scope.spawn(move || -> Result<(AgentRunner, Tally)> {
                    let mut log = StepLog::create(&path)?;
                    let mut link = addr.map(TcpLink::new);
                    let mut tally = Tally::default();
                    let mut outcome = Ok(());
                    for k in 0..cfg.steps {
                        if let Some(p) = step_period {
                            let due = p.mul_f64(k as f64);
                            if let Some(wait) = due.checked_sub(clock.elapsed()) {
                                std::thread::sleep(wait);
                            }
                        }
                        let now = clock.elapsed().as_secs_f64();
                        let l = link.as_mut().map(|l| l as &mut dyn FederationLink);
                        match runner.step_at(now, l) {
                            Ok(rec) => {
                                tally.push(&rec);
                                if let Err(e) = log.write(&rec) {
                                    outcome = Err(e);
                                    break;
                                }
                            }
                            Err(e) => {
                                outcome = Err(Error::Core(ftrl_core::Error::AgentFailed {
                                    agent: runner.id(),
                                    step: k,
                                    source: Box::new(e),
                                }));
                                break;
                            }
                        }
                    }
                    log.flush()?;
                    outcome.map(|_| (runner, tally))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Net("agent thread panicked".into())))
            })
            .collect()
    });
    let rounds = server.map(ServerHandle::shutdown).unwrap_or_default();
    if cfg.scenario.federated() {
        write_server_log(&cfg.output.join("server_log.csv"), &rounds)?;
    }
    let mut runners = Vec::new();
    let mut tallies = Vec::new();
    for r in results {
        let (runner, tally) = r?;
        runners.push(runner);
        tallies.push(tally);
    }
    Ok((runners, tallies, rounds))
}

fn finish(
    cfg: &ExperimentConfig,
    runners: Vec<AgentRunner>,
    tallies: Vec<Tally>,
    rounds: Vec<RoundRecord>,
) -> Result<RunSummary> {
    let out = &cfg.output;
    let windows = (cfg.steps as usize >= cfg.stages.required_steps()).then(|| cfg.stages.windows());
    let mut agents = Vec::new();
    let mut rows = Vec::new();
    for ((runner, tally), spec) in runners.iter().zip(&tallies).zip(&cfg.agents) {
        let id = runner.id();
        let rp_note = write_rp_curve(&out.join(rp_file(id)), &tally.rewards, &cfg.stages)?;
        save_model(&out.join(model_file(id)), runner.model().networks())?;
        let count =
            |r: std::ops::Range<usize>| tally.collided[r].iter().filter(|c| **c).count() as u64;
        let eval = evaluate_agent(cfg, spec, runner.model())?;
        if let Some(e) = &eval {
            rows.push(EvalRow {
                scenario: cfg.scenario.to_string(),
                agent: id,
                report: e.report,
            });
        }
        agents.push(AgentSummary {
            id,
            steps: tally.rewards.len() as u64,
            collisions: count(0..tally.collided.len()),
            stage_collisions: windows.clone().map(|(one, two)| [count(one), count(two)]),
            train_steps: runner.stats().train_steps,
            adopted_rounds: runner.stats().adopted_rounds,
            unavailable_syncs: runner.stats().unavailable_syncs,
            eval,
            rp_note,
        });
    }
    if cfg.eval_cycles > 0 {
        write_eval_report(&out.join("eval_report.csv"), &rows)?;
    }
    Ok(RunSummary {
        output: out.clone(),
        agents,
        rounds,
    })
}

/// Noise-free laps on the agent's evaluation course; `None` when the
/// agent has no such course or evaluation is disabled.
pub fn evaluate_agent(
    cfg: &ExperimentConfig,
    spec: &AgentSpec,
    model: &AgentModel,
) -> Result<Option<EvalOutcome>> {
    let Some(track) = &spec.eval_track else {
        return Ok(None);
    };
    if cfg.eval_cycles == 0 {
        return Ok(None);
    }
    let seed = cfg.agent_seed(spec) ^ EVAL_SALT;
    let mut env = Environment::new(track.clone(), cfg.agent_env(spec), seed)?;
    Ok(Some(evaluate_policy(
        model,
        &mut env,
        &spec.profile,
        cfg.eval_cycles,
        seed,
    )?))
}

/// Evaluates a saved checkpoint with every agent's profile and course and
/// writes `eval_report.csv` into `cfg.output`.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, model_path: &Path) -> Result<Vec<EvalRow>> {
    let networks = crate::output::load_model(model_path)?;
    let model = AgentModel::from_networks(BEAMS, cfg.ddpg.clone(), networks)?;
    let mut rows = Vec::new();
    for spec in &cfg.agents {
        if let Some(e) = evaluate_agent(cfg, spec, &model)? {
            rows.push(EvalRow {
                scenario: cfg.scenario.to_string(),
                agent: spec.id,
                report: e.report,
            });
        }
    }
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    write_eval_report(&cfg.output.join("eval_report.csv"), &rows)?;
    Ok(rows)
}
