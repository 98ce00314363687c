use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Constants of the collision-avoidance reward, in standard-scale meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardParams {
    /// Base reward per step.
    pub base_reward: f64,
    /// Penalty applied when the closest return is under `safe_distance`.
    pub collision_penalty: f64,
    pub safe_distance: f64,
    /// Exponent offset of the `2^(offset - m_d)` proximity penalty.
    pub exponent_offset: f64,
    /// Fraction of the smallest returns averaged into `m_d`.
    pub fraction: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            base_reward: 8.0,
            collision_penalty: 60.0,
            safe_distance: 1.1,
            exponent_offset: 7.0,
            fraction: 0.2,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_reward", self.base_reward),
            ("collision_penalty", self.collision_penalty),
            ("safe_distance", self.safe_distance),
            ("exponent_offset", self.exponent_offset),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "reward.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!(
                "reward.fraction must lie in (0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }

    /// Number of smallest returns averaged, `floor(f * n)`.
    pub fn window(&self, beams: usize) -> Result<usize> {
        let k = libm::floor(self.fraction * beams as f64) as usize;
        if k == 0 {
            return Err(Error::Config(format!(
                "fraction {} selects no beams out of {beams}",
                self.fraction
            )));
        }
        Ok(k)
    }
}

/// Mean of the `k` smallest entries.
pub fn smallest_mean(distances: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = distances.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted[..k].iter().sum::<f64>() / k as f64
}

/// Strictly below the safe distance.
pub fn detect_collision(distances: &[f64], safe_distance: f64) -> bool {
    distances.iter().any(|&d| d < safe_distance)
}

/// `r = base - penalty * [min < d] - 2^(offset - m_d)` on a standard-scale scan.
pub fn compute_reward(distances: &[f64], params: &RewardParams) -> Result<f64> {
    let collided = detect_collision(distances, params.safe_distance);
    reward_with_collision(distances, params, collided)
}

/// Reward with the collision indicator supplied by the caller.
pub(crate) fn reward_with_collision(
    distances: &[f64],
    params: &RewardParams,
    collided: bool,
) -> Result<f64> {
    let k = params.window(distances.len())?;
    let m_d = smallest_mean(distances, k);
    let penalty = if collided {
        params.collision_penalty
    } else {
        0.0
    };
    Ok(params.base_reward - penalty - libm::exp2(params.exponent_offset - m_d))
}
