//! The per-agent training loop and a single-threaded lockstep scheduler
//! that interleaves several agents with a federation server.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::ddpg::{AgentModel, Experience, OuNoise, ReplayBuffer, TrainGate, TrainStats};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::federation::{
    client_sync, AgentId, CycleTimer, FederationLink, FederationServer, RoundRecord, SyncOutcome,
};
use crate::transfer::TransferProfile;

/// One line of the per-step log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Zero-based step index.
    pub step: u64,
    /// `step * dt`.
    pub sim_time_s: f64,
    pub reward: f64,
    pub collided: bool,
    /// Smallest native LIDAR return after the step.
    pub min_dist: f64,
    /// Round adopted by a synchronization during this step.
    pub synced: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunnerConfig {
    pub train_gate: TrainGate,
    /// Sync period in the caller's clock units; `None` disables syncing.
    pub sync_cycle: Option<f64>,
    pub explore: bool,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            train_gate: TrainGate::Batch,
            sync_cycle: Some(720.0),
            explore: true,
        }
    }
}

/// Counters accumulated over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunnerStats {
    pub train_steps: u64,
    pub sync_attempts: u64,
    pub adopted_rounds: u64,
    pub unavailable_syncs: u64,
    pub last_train: Option<TrainStats>,
}

/// A DDPG agent bound to its environment and transfer profile.
#[derive(Clone, Debug)]
pub struct AgentRunner {
    id: AgentId,
    env: Environment,
    profile: TransferProfile,
    model: AgentModel,
    buffer: ReplayBuffer,
    noise: OuNoise,
    config: RunnerConfig,
    sync_timer: Option<CycleTimer>,
    held_round: u32,
    steps_taken: u64,
    stats: RunnerStats,
}

impl AgentRunner {
    pub fn new(
        id: AgentId,
        env: Environment,
        profile: TransferProfile,
        model: AgentModel,
        buffer: ReplayBuffer,
        noise: OuNoise,
        config: RunnerConfig,
    ) -> Result<Self> {
        if env.track().scale_label() != profile.scale_label() {
            return Err(Error::Validation(format!(
                "agent {id}: track scale `{}` does not match transfer profile `{}`",
                env.track().scale_label(),
                profile.scale_label()
            )));
        }
        if env.config().standard_scale != profile.beta() {
            return Err(Error::Validation(format!(
                "agent {id}: environment scale {} differs from profile beta {}",
                env.config().standard_scale,
                profile.beta()
            )));
        }
        if model.obs_dim() != crate::env::BEAMS {
            return Err(Error::Shape(format!(
                "agent {id}: model expects {} inputs, LIDAR provides {}",
                model.obs_dim(),
                crate::env::BEAMS
            )));
        }
        let sync_timer = config.sync_cycle.map(|p| CycleTimer::new(p, 0.0));
        Ok(Self {
            id,
            env,
            profile,
            model,
            buffer,
            noise,
            config,
            sync_timer,
            held_round: 0,
            steps_taken: 0,
            stats: RunnerStats::default(),
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn model(&self) -> &AgentModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut AgentModel {
        &mut self.model
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn profile(&self) -> &TransferProfile {
        &self.profile
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn held_round(&self) -> u32 {
        self.held_round
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn stats(&self) -> &RunnerStats {
        &self.stats
    }

    pub fn into_model(self) -> AgentModel {
        self.model
    }

    /// One iteration with the virtual clock (elapsed steps).
    pub fn step(&mut self, link: Option<&mut dyn FederationLink>) -> Result<StepRecord> {
        let now = (self.steps_taken + 1) as f64;
        self.step_at(now, link)
    }

    /// One iteration: observe, transfer, act, step the environment, record
    /// the transition, synchronize if the sync cycle has elapsed, train.
    /// `now` is the clock reading used for the sync cycle.
    pub fn step_at(
        &mut self,
        now: f64,
        link: Option<&mut dyn FederationLink>,
    ) -> Result<StepRecord> {
        let step = self.steps_taken;
        let obs = self.profile.standardize(self.env.observation()).into_vec();
        let action = self.model.act(&obs, &mut self.noise, self.config.explore)?;
        let steer = self.profile.transfer_action(action)?;
        let outcome = self.env.step(steer)?;
        let next_obs = self.profile.standardize(&outcome.observation).into_vec();
        self.buffer.record(Experience::new(
            obs,
            action,
            outcome.reward,
            next_obs,
            outcome.collided,
        )?);
        self.steps_taken += 1;

        let mut synced = None;
        if let (Some(timer), Some(link)) = (self.sync_timer.as_mut(), link) {
            if timer.poll(now) {
                self.stats.sync_attempts += 1;
                match client_sync(self.id, &mut self.model, &mut self.held_round, link)? {
                    SyncOutcome::Adopted(round) => {
                        self.stats.adopted_rounds += 1;
                        synced = Some(round);
                    }
                    SyncOutcome::Unchanged(_) => {}
                    SyncOutcome::Unavailable => self.stats.unavailable_syncs += 1,
                }
            }
        }

        let batch_size = self.model.hyperparams().batch_size;
        if self.config.train_gate.ready(&self.buffer, batch_size) {
            if let Some(batch) = self.buffer.sample(batch_size) {
                let stats = self.model.train_step(&batch)?;
                self.stats.train_steps += 1;
                self.stats.last_train = Some(stats);
            }
        }

        Ok(StepRecord {
            step,
            sim_time_s: step as f64 * self.env.config().dt,
            reward: outcome.reward,
            collided: outcome.collided,
            min_dist: outcome.observation.min(),
            synced,
        })
    }

    /// Runs `steps` iterations on the virtual clock.
    pub fn run(
        &mut self,
        steps: u64,
        mut link: Option<&mut dyn FederationLink>,
    ) -> Result<Vec<StepRecord>> {
        let mut log = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let reborrowed: Option<&mut dyn FederationLink> = match link {
                Some(ref mut l) => Some(&mut **l),
                None => None,
            };
            log.push(self.step(reborrowed)?);
        }
        Ok(log)
    }
}

/// Per-agent step logs plus the server's aggregation history.
#[derive(Clone, Debug, PartialEq)]
pub struct LockstepOutcome {
    pub logs: Vec<Vec<StepRecord>>,
    pub rounds: Vec<RoundRecord>,
}

/// Drives all agents from one scheduler. At tick `t` (1-based) every agent
/// takes one step in slice order, then the server aggregates if its cycle
/// has elapsed. With no server, agents train alone.
pub fn run_lockstep(
    agents: &mut [AgentRunner],
    server: Option<&mut FederationServer>,
    federation_cycle: f64,
    total_steps: u64,
) -> Result<LockstepOutcome> {
    let mut logs: Vec<Vec<StepRecord>> = agents
        .iter()
        .map(|_| Vec::with_capacity(total_steps as usize))
        .collect();
    let rounds = run_lockstep_with(
        agents,
        server,
        federation_cycle,
        total_steps,
        &mut |i, rec| {
            logs[i].push(rec.clone());
            Ok(())
        },
    )?;
    Ok(LockstepOutcome { logs, rounds })
}

/// [`run_lockstep`] handing each record to `observer` (agent index, record)
/// as it is produced, so a failing run still leaves its earlier records
/// with the caller. Agent failures are reported as [`Error::AgentFailed`].
pub fn run_lockstep_with(
    agents: &mut [AgentRunner],
    mut server: Option<&mut FederationServer>,
    federation_cycle: f64,
    total_steps: u64,
    observer: &mut dyn FnMut(usize, &StepRecord) -> Result<()>,
) -> Result<Vec<RoundRecord>> {
    let mut fed_timer = CycleTimer::new(federation_cycle, 0.0);
    for tick in 1..=total_steps {
        for (i, agent) in agents.iter_mut().enumerate() {
            let link = server.as_deref_mut().map(|s| s as &mut dyn FederationLink);
            let record = agent.step(link).map_err(|e| Error::AgentFailed {
                agent: agent.id(),
                step: tick - 1,
                source: Box::new(e),
            })?;
            observer(i, &record)?;
        }
        if let Some(server) = server.as_deref_mut() {
            if fed_timer.poll(tick as f64) {
                server.federate(tick as f64)?;
            }
        }
    }
    Ok(server.map(|s| s.history().to_vec()).unwrap_or_default())
}
