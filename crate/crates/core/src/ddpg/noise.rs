use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Ornstein-Uhlenbeck exploration process:
/// `x' = x + theta (mu - x) dt + sigma sqrt(dt) N(0, 1)`.
#[derive(Clone, Debug)]
pub struct OuNoise {
    value: f64,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub dt: f64,
    rng: ChaCha8Rng,
}

impl OuNoise {
    pub fn new(theta: f64, sigma: f64, mu: f64, dt: f64, seed: u64) -> Self {
        Self {
            value: mu,
            theta,
            sigma,
            mu,
            dt,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// theta 0.15, sigma 0.2, mu 0, dt 1.
    pub fn with_defaults(seed: u64) -> Self {
        Self::new(0.15, 0.2, 0.0, 1.0, seed)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn reset(&mut self) {
        self.value = self.mu;
    }

    /// Advances the process one step and returns the new value.
    pub fn sample(&mut self) -> f64 {
        let n: f64 = StandardNormal.sample(&mut self.rng);
        self.value +=
            self.theta * (self.mu - self.value) * self.dt + self.sigma * libm::sqrt(self.dt) * n;
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_decays_towards_mu() {
        let mut n = OuNoise::new(0.5, 0.0, 1.0, 1.0, 3);
        n.value = 3.0;
        assert_eq!(n.sample(), 2.0);
        assert_eq!(n.sample(), 1.5);
    }

    #[test]
    fn same_seed_same_path() {
        let mut a = OuNoise::with_defaults(11);
        let mut b = OuNoise::with_defaults(11);
        for _ in 0..50 {
            assert_eq!(a.sample(), b.sample());
        }
    }
}
