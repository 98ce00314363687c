//! Relative performance between training stages, cumulative curves, and
//! policy evaluation on a lap course.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::ddpg::AgentModel;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::transfer::TransferProfile;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageConfig {
    pub stage_len: usize,
    /// Leading stages ignored before stage I.
    pub warmup_stages: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage_len: 2500,
            warmup_stages: 1,
        }
    }
}

impl StageConfig {
    /// Step-index ranges of stages I and II.
    pub fn windows(&self) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let s1 = self.warmup_stages * self.stage_len;
        (
            s1..s1 + self.stage_len,
            s1 + self.stage_len..s1 + 2 * self.stage_len,
        )
    }

    /// Stage windows in seconds for a step duration `dt`.
    pub fn time_windows(&self, dt: f64) -> ((f64, f64), (f64, f64)) {
        let (a, b) = self.windows();
        (
            (a.start as f64 * dt, a.end as f64 * dt),
            (b.start as f64 * dt, b.end as f64 * dt),
        )
    }

    pub fn required_steps(&self) -> usize {
        (self.warmup_stages + 2) * self.stage_len
    }
}

/// `(r_II - r_I) / (r_max - r_min)`.
pub fn relative_performance(r_one: f64, r_two: f64, r_max: f64, r_min: f64) -> Result<f64> {
    if !(r_max > r_min) {
        return Err(Error::DegenerateRun(r_max));
    }
    Ok((r_two - r_one) / (r_max - r_min))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSeries {
    pub stage_one: Vec<f64>,
    pub stage_two: Vec<f64>,
    /// Extremes over the whole run, warm-up included.
    pub r_max: f64,
    pub r_min: f64,
}

impl StageSeries {
    /// Per-index relative performance.
    pub fn relative_performance(&self) -> Result<Vec<f64>> {
        self.stage_one
            .iter()
            .zip(&self.stage_two)
            .map(|(&a, &b)| relative_performance(a, b, self.r_max, self.r_min))
            .collect()
    }
}

pub fn stage_series(rewards: &[f64], stages: &StageConfig) -> Result<StageSeries> {
    if stages.stage_len == 0 {
        return Err(Error::Config("stage length must be positive".into()));
    }
    let needed = stages.required_steps();
    if rewards.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: rewards.len(),
        });
    }
    let (one, two) = stages.windows();
    let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r_min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StageSeries {
        stage_one: rewards[one].to_vec(),
        stage_two: rewards[two].to_vec(),
        r_max,
        r_min,
    })
}

/// Prefix sums.
pub fn cumulative_rp(rp: &[f64]) -> Vec<f64> {
    rp.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Result of driving a policy around the evaluation course.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean over steps of the smallest native LIDAR return.
    pub avg_dist: f64,
    pub coll_no: u64,
    pub cycles_completed: u64,
}

impl PartialOrd for EvalReport {
    /// `Greater` means better: no smaller average distance and no more
    /// collisions. Reports that trade one for the other are incomparable.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let dist = self.avg_dist.partial_cmp(&other.avg_dist)?;
        let coll = other.coll_no.cmp(&self.coll_no);
        match (dist, coll) {
            (Ordering::Equal, c) => Some(c),
            (d, Ordering::Equal) => Some(d),
            (d, c) if d == c => Some(d),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub steps: u64,
    /// The step budget ran out before all cycles were completed.
    pub timed_out: bool,
}

/// Maps a standard-scale scan to a standardized action.
pub trait Policy {
    fn action(&self, standard_obs: &[f64]) -> Result<f64>;
}

impl Policy for AgentModel {
    fn action(&self, standard_obs: &[f64]) -> Result<f64> {
        self.policy(standard_obs)
    }
}

impl<F: Fn(&[f64]) -> f64> Policy for F {
    fn action(&self, standard_obs: &[f64]) -> Result<f64> {
        Ok(crate::ddpg::clamp_action(self(standard_obs)))
    }
}

/// Steps allowed per requested cycle before giving up.
pub const STEPS_PER_CYCLE_BUDGET: u64 = 10_000;

/// Noise-free rollout until `cycles` laps are completed or the step budget
/// (`cycles * 10000`) runs out.
pub fn evaluate_policy(
    policy: &dyn Policy,
    env: &mut Environment,
    profile: &TransferProfile,
    cycles: u64,
    seed: u64,
) -> Result<EvalOutcome> {
    if env.track().lap_line().is_none() {
        return Err(Error::InvalidTrack(
            "evaluation track has no lap line".into(),
        ));
    }
    if cycles == 0 {
        return Err(Error::Config("evaluation needs at least one cycle".into()));
    }
    env.reset(seed)?;
    let budget = cycles * STEPS_PER_CYCLE_BUDGET;
    let mut steps = 0u64;
    let mut dist_sum = 0.0;
    while env.laps() < cycles as i64 && steps < budget {
        let obs = profile.standardize(env.observation());
        let action = policy.action(obs.as_slice())?;
        let out = env.step(profile.transfer_action(action)?)?;
        dist_sum += out.observation.min();
        steps += 1;
    }
    let avg_dist = if steps == 0 {
        0.0
    } else {
        dist_sum / steps as f64
    };
    Ok(EvalOutcome {
        report: EvalReport {
            avg_dist,
            coll_no: env.respawns(),
            cycles_completed: env.laps().max(0) as u64,
        },
        steps,
        timed_out: env.laps() < cycles as i64,
    })
}
