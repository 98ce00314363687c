//! FedAvg aggregation, the clock-agnostic federation server state, and the
//! agent-side model synchronization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::ddpg::{AgentModel, ModelBundle, NetworkRole};
use crate::error::{Error, Result};
use crate::nn::ModelParams;

pub type AgentId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    /// Durations count decision steps of a single scheduler.
    Virtual,
    /// Durations are wall-clock seconds.
    Wall,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    /// Period between aggregations.
    pub federation_cycle: f64,
    /// Period between an agent's model synchronizations.
    pub sync_cycle: f64,
    pub expected_agents: usize,
    pub clock_mode: ClockMode,
}

impl Default for FederationConfig {
    /// 480 and 720 steps: two and three minutes at 0.25 s per step.
    fn default() -> Self {
        Self {
            federation_cycle: 480.0,
            sync_cycle: 720.0,
            expected_agents: 1,
            clock_mode: ClockMode::Virtual,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.federation_cycle > 0.0) {
            return Err(Error::Config(format!(
                "federation.federation_cycle must be positive, got {}",
                self.federation_cycle
            )));
        }
        if !(self.sync_cycle > 0.0) {
            return Err(Error::Config(format!(
                "federation.sync_cycle must be positive, got {}",
                self.sync_cycle
            )));
        }
        if self.expected_agents == 0 {
            return Err(Error::Config(
                "federation.expected_agents must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fires once at least `period` has elapsed since the last firing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleTimer {
    period: f64,
    last: f64,
}

impl CycleTimer {
    pub fn new(period: f64, start: f64) -> Self {
        Self {
            period,
            last: start,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn poll(&mut self, now: f64) -> bool {
        if now - self.last >= self.period {
            self.last = now;
            true
        } else {
            false
        }
    }
}

/// Elementwise arithmetic mean of identically shaped models; list position
/// serves as the agent id.
pub fn fedavg(models: &[&ModelParams]) -> Result<ModelParams> {
    let tagged: Vec<(AgentId, &ModelParams)> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (i as AgentId, *m))
        .collect();
    fedavg_tagged(&tagged)
}

/// [`fedavg`] over `(agent, model)` pairs; shape errors name the agent.
///
/// Models are folded in ascending agent order as a running mean,
/// `m += (x - m) / k`, so the result does not depend on the order of the
/// list and N copies of one model average to that model exactly.
pub fn fedavg_tagged(models: &[(AgentId, &ModelParams)]) -> Result<ModelParams> {
    let mut ordered: Vec<(AgentId, &ModelParams)> = models.to_vec();
    ordered.sort_by_key(|(agent, _)| *agent);
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Aggregation {
            agent: w[0].0,
            reason: "agent appears more than once".into(),
        });
    }
    let (_, first) = ordered
        .first()
        .ok_or_else(|| Error::Validation("fedavg needs at least one model".into()))?;
    for (agent, m) in &ordered {
        if !m.same_shape(first) {
            return Err(Error::Aggregation {
                agent: *agent,
                reason: "layer shapes differ from the first model".into(),
            });
        }
    }
    let mut mean = (*first).clone();
    for (k, (_, m)) in ordered.iter().enumerate().skip(1) {
        let count = (k + 1) as f64;
        for (acc, layer) in mean.layers.iter_mut().zip(&m.layers) {
            for (a, x) in acc.weights.iter_mut().zip(&layer.weights) {
                *a += (x - *a) / count;
            }
            for (a, x) in acc.bias.iter_mut().zip(&layer.bias) {
                *a += (x - *a) / count;
            }
        }
    }
    Ok(mean)
}

/// FedAvg applied to each of the four DDPG networks.
pub fn fedavg_bundles(models: &[(AgentId, &ModelBundle)]) -> Result<ModelBundle> {
    let role_avg = |role: NetworkRole| {
        let list: Vec<(AgentId, &ModelParams)> =
            models.iter().map(|(a, b)| (*a, b.get(role))).collect();
        fedavg_tagged(&list)
    };
    Ok(ModelBundle {
        actor: role_avg(NetworkRole::Actor)?,
        critic: role_avg(NetworkRole::Critic)?,
        target_actor: role_avg(NetworkRole::TargetActor)?,
        target_critic: role_avg(NetworkRole::TargetCritic)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationSnapshot {
    /// Starts at 1; 0 is reserved for "no snapshot yet".
    pub round: u32,
    pub networks: ModelBundle,
    /// Clock reading of the aggregation.
    pub created_at: f64,
}

/// One aggregation event.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub at: f64,
    pub participants: Vec<AgentId>,
}

/// Server state: the newest model pushed by each agent and the current
/// snapshot. Snapshots are immutable and replaced whole.
#[derive(Clone, Debug, Default)]
pub struct FederationServer {
    latest: BTreeMap<AgentId, ModelBundle>,
    snapshot: Option<Arc<FederationSnapshot>>,
    history: Vec<RoundRecord>,
}

impl FederationServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `networks` as the agent's current model, replacing any
    /// earlier push.
    pub fn push(&mut self, agent: AgentId, networks: ModelBundle) -> Result<()> {
        let reference = self
            .latest
            .values()
            .next()
            .or(self.snapshot.as_deref().map(|s| &s.networks));
        if let Some(reference) = reference {
            if !reference.same_shape(&networks) {
                return Err(Error::Aggregation {
                    agent,
                    reason: "pushed networks differ in shape from the federation".into(),
                });
            }
        }
        self.latest.insert(agent, networks);
        Ok(())
    }

    /// Averages the latest push of every agent that has pushed at least
    /// once, in ascending agent order. Returns `None` (no new round) when
    /// nobody has pushed yet.
    pub fn federate(&mut self, now: f64) -> Result<Option<&RoundRecord>> {
        if self.latest.is_empty() {
            return Ok(None);
        }
        let models: Vec<(AgentId, &ModelBundle)> =
            self.latest.iter().map(|(a, m)| (*a, m)).collect();
        let networks = fedavg_bundles(&models)?;
        let round = self.round() + 1;
        self.snapshot = Some(Arc::new(FederationSnapshot {
            round,
            networks,
            created_at: now,
        }));
        self.history.push(RoundRecord {
            round,
            at: now,
            participants: self.latest.keys().copied().collect(),
        });
        Ok(self.history.last())
    }

    /// Current round, 0 before the first aggregation.
    pub fn round(&self) -> u32 {
        self.snapshot.as_ref().map_or(0, |s| s.round)
    }

    pub fn latest(&self) -> Option<Arc<FederationSnapshot>> {
        self.snapshot.clone()
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn pushed_agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.latest.keys().copied()
    }
}

/// Agent-side connection to a federation server.
pub trait FederationLink {
    /// Pushes the agent's current networks, then fetches the newest
    /// snapshot (`None` before the first round).
    fn exchange(
        &mut self,
        agent: AgentId,
        local: &ModelBundle,
    ) -> Result<Option<Arc<FederationSnapshot>>>;
}

impl FederationLink for FederationServer {
    fn exchange(
        &mut self,
        agent: AgentId,
        local: &ModelBundle,
    ) -> Result<Option<Arc<FederationSnapshot>>> {
        self.push(agent, local.clone())?;
        Ok(self.latest())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncOutcome {
    /// Networks replaced by this round's snapshot.
    Adopted(u32),
    /// No snapshot newer than the one already held.
    Unchanged(u32),
    /// The server could not be reached; the agent keeps training locally.
    Unavailable,
}

/// One synchronization: push the local model, adopt the server snapshot if
/// it is newer than `held_round`.
pub fn client_sync(
    agent: AgentId,
    model: &mut AgentModel,
    held_round: &mut u32,
    link: &mut dyn FederationLink,
) -> Result<SyncOutcome> {
    let snapshot = match link.exchange(agent, model.networks()) {
        Ok(s) => s,
        Err(Error::LinkUnavailable(_)) => return Ok(SyncOutcome::Unavailable),
        Err(e) => return Err(e),
    };
    match snapshot {
        Some(s) if s.round > *held_round => {
            model.adopt(&s.networks)?;
            *held_round = s.round;
            Ok(SyncOutcome::Adopted(s.round))
        }
        _ => Ok(SyncOutcome::Unchanged(*held_round)),
    }
}
