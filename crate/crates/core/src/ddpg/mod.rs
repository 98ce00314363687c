//! Deep deterministic policy gradient learner with target networks.

pub mod noise;
pub mod replay;

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Matrix, MlpSpec, ModelParams};
pub use noise::OuNoise;
pub use replay::{Experience, ReplayBuffer};

/// Actions are clamped to `[-1 + ACTION_EPSILON, 1 - ACTION_EPSILON]`.
pub const ACTION_EPSILON: f64 = 1e-6;
/// Output layers start in `±FINAL_LAYER_INIT` so the initial policy and
/// value estimates are near zero.
pub const FINAL_LAYER_INIT: f64 = 3e-3;

/// When local training may start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainGate {
    /// As soon as one batch can be drawn.
    Batch,
    /// Only once the replay buffer is full.
    Full,
}

impl TrainGate {
    pub fn ready(self, buffer: &ReplayBuffer, batch_size: usize) -> bool {
        match self {
            TrainGate::Batch => buffer.len() >= batch_size,
            TrainGate::Full => buffer.is_full() && buffer.len() >= batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdpgHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Hidden widths shared by actor and critic.
    pub hidden_layers: Vec<usize>,
}

impl Default for DdpgHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.02,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            buffer_capacity: 2500,
            batch_size: 32,
            hidden_layers: alloc::vec![128, 128, 128],
        }
    }
}

impl DdpgHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "ddpg.gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "ddpg.tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "ddpg.{name} must be positive, got {lr}"
                )));
            }
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config(
                "ddpg.batch_size and ddpg.buffer_capacity must be positive".into(),
            ));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "ddpg.batch_size {} exceeds ddpg.buffer_capacity {}",
                self.batch_size, self.buffer_capacity
            )));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config(
                "ddpg.hidden_layers must be positive widths".into(),
            ));
        }
        Ok(())
    }
}

/// Which of the four DDPG networks a parameter block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NetworkRole {
    Actor = 0,
    Critic = 1,
    TargetActor = 2,
    TargetCritic = 3,
}

impl NetworkRole {
    pub const ALL: [NetworkRole; 4] = [
        NetworkRole::Actor,
        NetworkRole::Critic,
        NetworkRole::TargetActor,
        NetworkRole::TargetCritic,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

/// The four networks exchanged with the federation server.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub actor: ModelParams,
    pub critic: ModelParams,
    pub target_actor: ModelParams,
    pub target_critic: ModelParams,
}

impl ModelBundle {
    pub fn get(&self, role: NetworkRole) -> &ModelParams {
        match role {
            NetworkRole::Actor => &self.actor,
            NetworkRole::Critic => &self.critic,
            NetworkRole::TargetActor => &self.target_actor,
            NetworkRole::TargetCritic => &self.target_critic,
        }
    }

    pub fn get_mut(&mut self, role: NetworkRole) -> &mut ModelParams {
        match role {
            NetworkRole::Actor => &mut self.actor,
            NetworkRole::Critic => &mut self.critic,
            NetworkRole::TargetActor => &mut self.target_actor,
            NetworkRole::TargetCritic => &mut self.target_critic,
        }
    }

    pub fn same_shape(&self, other: &ModelBundle) -> bool {
        NetworkRole::ALL
            .iter()
            .all(|&r| self.get(r).same_shape(other.get(r)))
    }
}

/// Loss statistics of one [`AgentModel::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    /// Mean squared TD error before the critic update.
    pub critic_loss: f64,
    /// Mean `Q(s, mu(s))` before the actor update.
    pub actor_objective: f64,
}

/// TD targets `y = r + gamma * q_next`, with the bootstrap dropped on cuts.
pub fn td_targets(rewards: &[f64], next_q: &[f64], cuts: &[bool], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(next_q)
        .zip(cuts)
        .map(|((&r, &q), &cut)| if cut { r } else { r + gamma * q })
        .collect()
}

/// Actor, critic, their targets and optimizer states.
#[derive(Clone, Debug)]
pub struct AgentModel {
    actor_spec: MlpSpec,
    critic_spec: MlpSpec,
    networks: ModelBundle,
    actor_opt: AdamState,
    critic_opt: AdamState,
    hyper: DdpgHyperparams,
}

impl AgentModel {
    /// Fresh networks; targets start as copies of the online networks.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hyper: DdpgHyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        let actor_spec = MlpSpec::actor(obs_dim, &hyper.hidden_layers)?;
        let critic_spec = MlpSpec::critic(obs_dim, 1, &hyper.hidden_layers)?;
        let mut actor = ModelParams::init(&actor_spec, rng);
        let mut critic = ModelParams::init(&critic_spec, rng);
        for net in [&mut actor, &mut critic] {
            let last = net.layers.last_mut().expect("at least one layer");
            for v in last.weights.iter_mut().chain(last.bias.iter_mut()) {
                *v = rng.random_range(-FINAL_LAYER_INIT..FINAL_LAYER_INIT);
            }
        }
        let networks = ModelBundle {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        };
        Self::from_networks(obs_dim, hyper, networks)
    }

    pub fn from_networks(
        obs_dim: usize,
        hyper: DdpgHyperparams,
        networks: ModelBundle,
    ) -> Result<Self> {
        hyper.validate()?;
        let actor_spec = MlpSpec::actor(obs_dim, &hyper.hidden_layers)?;
        let critic_spec = MlpSpec::critic(obs_dim, 1, &hyper.hidden_layers)?;
        for (role, spec) in [
            (NetworkRole::Actor, &actor_spec),
            (NetworkRole::TargetActor, &actor_spec),
            (NetworkRole::Critic, &critic_spec),
            (NetworkRole::TargetCritic, &critic_spec),
        ] {
            if !networks.get(role).conforms_to(spec) {
                return Err(Error::Shape(format!(
                    "{role:?} network does not match the agent architecture"
                )));
            }
        }
        Ok(Self {
            actor_opt: AdamState::new(&actor_spec, hyper.actor_lr)?,
            critic_opt: AdamState::new(&critic_spec, hyper.critic_lr)?,
            actor_spec,
            critic_spec,
            networks,
            hyper,
        })
    }

    pub fn hyperparams(&self) -> &DdpgHyperparams {
        &self.hyper
    }

    pub fn obs_dim(&self) -> usize {
        self.actor_spec.input_dim()
    }

    pub fn actor_spec(&self) -> &MlpSpec {
        &self.actor_spec
    }

    pub fn critic_spec(&self) -> &MlpSpec {
        &self.critic_spec
    }

    pub fn networks(&self) -> &ModelBundle {
        &self.networks
    }

    /// Replaces all four networks (optimizer moments are kept).
    pub fn adopt(&mut self, networks: &ModelBundle) -> Result<()> {
        if !networks.same_shape(&self.networks) {
            return Err(Error::Shape(
                "adopted networks differ in shape from the local model".into(),
            ));
        }
        self.networks.clone_from(networks);
        Ok(())
    }

    /// Deterministic policy output, clamped inside `(-1, 1)`.
    pub fn policy(&self, obs: &[f64]) -> Result<f64> {
        let (out, _) = crate::nn::mlp_forward(&self.networks.actor, &self.actor_spec, obs)?;
        let a = out[0];
        if !a.is_finite() {
            return Err(Error::NonFinite {
                layer: self.actor_spec.num_layers() - 1,
                context: format!("actor output {a}"),
            });
        }
        Ok(clamp_action(a))
    }

    /// Behaviour action: policy plus OU noise when exploring.
    pub fn act(&self, obs: &[f64], noise: &mut OuNoise, explore: bool) -> Result<f64> {
        let a = self.policy(obs)?;
        if explore {
            Ok(clamp_action(a + noise.sample()))
        } else {
            Ok(a)
        }
    }

    /// Critic value of a single state-action pair.
    pub fn q_value(&self, obs: &[f64], action: f64) -> Result<f64> {
        let mut input = obs.to_vec();
        input.push(action);
        let (out, _) = crate::nn::mlp_forward(&self.networks.critic, &self.critic_spec, &input)?;
        Ok(out[0])
    }

    fn stack(
        rows: impl Iterator<Item = (Vec<f64>, Option<f64>)>,
        cols: usize,
        n: usize,
    ) -> Result<Matrix> {
        let mut data = Vec::with_capacity(n * cols);
        for (row, extra) in rows {
            data.extend_from_slice(&row);
            if let Some(a) = extra {
                data.push(a);
            }
        }
        Matrix::from_vec(n, cols, data)
    }

    fn obs_matrix<'a>(&self, obs: impl Iterator<Item = &'a Vec<f64>>, n: usize) -> Result<Matrix> {
        let d = self.obs_dim();
        let mut data = Vec::with_capacity(n * d);
        for o in obs {
            if o.len() != d {
                return Err(Error::Shape(format!(
                    "observation of width {} for a {d}-input actor",
                    o.len()
                )));
            }
            data.extend_from_slice(o);
        }
        Matrix::from_vec(n, d, data)
    }

    fn with_actions(states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        let n = states.rows();
        Self::stack(
            (0..n).map(|r| (states.row(r).to_vec(), Some(actions.row(r)[0]))),
            states.cols() + 1,
            n,
        )
    }

    /// One DDPG update on `batch`: critic regression onto TD targets, a
    /// deterministic policy-gradient actor step, then Polyak target updates.
    pub fn train_step(&mut self, batch: &[&Experience]) -> Result<TrainStats> {
        let n = batch.len();
        if n != self.hyper.batch_size {
            return Err(Error::Validation(format!(
                "batch has {n} transitions, configured batch size is {}",
                self.hyper.batch_size
            )));
        }
        let states = self.obs_matrix(batch.iter().map(|e| &e.obs), n)?;
        let next_states = self.obs_matrix(batch.iter().map(|e| &e.next_obs), n)?;

        // TD targets from the target networks.
        let next_actions = self
            .networks
            .target_actor
            .forward_batch(&self.actor_spec, &next_states)?;
        let next_input = Self::with_actions(&next_states, next_actions.output())?;
        let next_q = self
            .networks
            .target_critic
            .forward_batch(&self.critic_spec, &next_input)?;
        let rewards: Vec<f64> = batch.iter().map(|e| e.reward).collect();
        let cuts: Vec<bool> = batch.iter().map(|e| e.bootstrap_cut).collect();
        let targets = td_targets(
            &rewards,
            next_q.output().as_slice(),
            &cuts,
            self.hyper.gamma,
        );

        // Critic: minimise mean squared TD error.
        let sa = Self::stack(
            batch.iter().map(|e| (e.obs.clone(), Some(e.action))),
            self.obs_dim() + 1,
            n,
        )?;
        let critic_cache = self.networks.critic.forward_batch(&self.critic_spec, &sa)?;
        let q = critic_cache.output().as_slice();
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(n);
        for (qv, y) in q.iter().zip(&targets) {
            let err = qv - y;
            loss += err * err;
            grad.push(2.0 * err / n as f64);
        }
        loss /= n as f64;
        if !loss.is_finite() {
            let worst = rewards.iter().copied().fold(0.0f64, |m, r| m.max(r.abs()));
            return Err(Error::NonFinite {
                layer: self.critic_spec.num_layers() - 1,
                context: format!("critic loss {loss} (batch of {n}, max |reward| {worst})"),
            });
        }
        let (critic_grads, _) = self.networks.critic.backward_batch(
            &self.critic_spec,
            &critic_cache,
            &Matrix::from_vec(n, 1, grad)?,
        )?;
        adam_step(
            &mut self.networks.critic,
            &critic_grads,
            &mut self.critic_opt,
        )?;

        // Actor: ascend Q(s, mu(s)) through the updated critic.
        let action_col = self.obs_dim();
        let Self {
            networks,
            actor_spec,
            critic_spec,
            actor_opt,
            ..
        } = self;
        let mut objective = 0.0;
        actor_step(
            &mut networks.actor,
            actor_spec,
            actor_opt,
            &states,
            |actor_out| {
                let input = Self::with_actions(&states, actor_out)?;
                let cache = networks.critic.forward_batch(critic_spec, &input)?;
                objective = cache.output().as_slice().iter().sum::<f64>() / n as f64;
                let upstream = Matrix::from_vec(n, 1, alloc::vec![-1.0 / n as f64; n])?;
                let (_, input_grad) =
                    networks
                        .critic
                        .backward_batch(critic_spec, &cache, &upstream)?;
                Ok((0..n).map(|r| input_grad.row(r)[action_col]).collect())
            },
        )?;

        let tau = self.hyper.tau;
        self.networks
            .target_actor
            .blend_from(&self.networks.actor, tau)?;
        self.networks
            .target_critic
            .blend_from(&self.networks.critic, tau)?;

        Ok(TrainStats {
            critic_loss: loss,
            actor_objective: objective,
        })
    }

    /// Actor step given the gradient of the loss with respect to each
    /// sample's action. `loss_grad` receives the actor's batch output.
    pub fn update_actor<F>(&mut self, states: &Matrix, loss_grad: F) -> Result<()>
    where
        F: FnOnce(&Matrix) -> Result<Vec<f64>>,
    {
        actor_step(
            &mut self.networks.actor,
            &self.actor_spec,
            &mut self.actor_opt,
            states,
            loss_grad,
        )
    }
}

fn actor_step<F>(
    actor: &mut ModelParams,
    spec: &MlpSpec,
    opt: &mut AdamState,
    states: &Matrix,
    loss_grad: F,
) -> Result<()>
where
    F: FnOnce(&Matrix) -> Result<Vec<f64>>,
{
    let cache = actor.forward_batch(spec, states)?;
    let grad = loss_grad(cache.output())?;
    let upstream = Matrix::from_vec(states.rows(), 1, grad)?;
    let (actor_grads, _) = actor.backward_batch(spec, &cache, &upstream)?;
    adam_step(actor, &actor_grads, opt)
}

pub fn clamp_action(a: f64) -> f64 {
    a.clamp(-1.0 + ACTION_EPSILON, 1.0 - ACTION_EPSILON)
}
