use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One transition, stored in standard scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub obs: Vec<f64>,
    /// Standardized action in `(-1, 1)`.
    pub action: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// No bootstrapping from `next_obs` (the car was respawned).
    pub bootstrap_cut: bool,
}

impl Experience {
    pub fn new(
        obs: Vec<f64>,
        action: f64,
        reward: f64,
        next_obs: Vec<f64>,
        bootstrap_cut: bool,
    ) -> Result<Self> {
        if obs.len() != next_obs.len() {
            return Err(Error::Validation(format!(
                "observation widths differ: {} vs {}",
                obs.len(),
                next_obs.len()
            )));
        }
        if !(action.abs() < 1.0) {
            return Err(Error::Validation(format!(
                "action {action} outside (-1, 1)"
            )));
        }
        if !reward.is_finite() {
            return Err(Error::Validation(format!("reward {reward} is not finite")));
        }
        Ok(Self {
            obs,
            action,
            reward,
            next_obs,
            bootstrap_cut,
        })
    }
}

/// Bounded FIFO of experiences with seeded uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    entries: VecDeque<Experience>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay buffer capacity must be positive".into(),
            ));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Appends, evicting the oldest entry once full.
    pub fn record(&mut self, experience: Experience) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(experience);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    /// Uniform sample with replacement; `None` until `n` entries exist.
    pub fn sample(&mut self, n: usize) -> Option<Vec<&Experience>> {
        if n == 0 || self.entries.len() < n {
            return None;
        }
        let len = self.entries.len();
        let picks: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..len)).collect();
        Some(picks.into_iter().map(|i| &self.entries[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn exp(tag: f64) -> Experience {
        Experience::new(vec![tag], 0.0, tag, vec![tag], false).unwrap()
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(2500, 0).unwrap();
        for i in 0..2501 {
            buf.record(exp(i as f64));
        }
        assert_eq!(buf.len(), 2500);
        assert!(buf.iter().all(|e| e.reward != 0.0));
        assert_eq!(buf.iter().next().unwrap().reward, 1.0);
    }

    #[test]
    fn eviction_order_exhaustive_small_capacity() {
        let mut buf = ReplayBuffer::new(5, 0).unwrap();
        for i in 0..20usize {
            buf.record(exp(i as f64));
            let lo = (i + 1).saturating_sub(5);
            let held: Vec<f64> = buf.iter().map(|e| e.reward).collect();
            let expected: Vec<f64> = (lo..=i).map(|k| k as f64).collect();
            assert_eq!(held, expected, "after insert {i}");
        }
    }

    #[test]
    fn sample_not_ready_below_batch() {
        let mut buf = ReplayBuffer::new(100, 0).unwrap();
        for i in 0..31 {
            buf.record(exp(i as f64));
        }
        assert!(buf.sample(32).is_none());
        buf.record(exp(31.0));
        assert_eq!(buf.sample(32).unwrap().len(), 32);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let fill = |seed| {
            let mut buf = ReplayBuffer::new(100, seed).unwrap();
            for i in 0..50 {
                buf.record(exp(i as f64));
            }
            buf
        };
        let (mut a, mut b) = (fill(7), fill(7));
        let sa: Vec<f64> = a.sample(32).unwrap().iter().map(|e| e.reward).collect();
        let sb: Vec<f64> = b.sample(32).unwrap().iter().map(|e| e.reward).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn experience_validation() {
        assert!(Experience::new(vec![1.0], 1.0, 0.0, vec![1.0], false).is_err());
        assert!(Experience::new(vec![1.0], 0.0, 0.0, vec![1.0, 2.0], false).is_err());
        assert!(Experience::new(vec![1.0], 0.0, f64::NAN, vec![1.0], false).is_err());
    }
}
