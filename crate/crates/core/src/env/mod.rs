//! Deterministic 2D course with a constant-speed steerable car and a
//! front-view LIDAR.

pub mod geometry;
pub mod lidar;
pub mod reward;
pub mod track;

use alloc::format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
pub use geometry::{normalize_angle, Polygon, Vec2};
pub use lidar::{cast_lidar, Observation, BEAMS};
pub use reward::{compute_reward, detect_collision, RewardParams};
pub use track::{LapLine, Pose, Track};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarState {
    pub position: Vec2,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
    pub speed: f64,
}

impl CarState {
    pub fn new(position: Vec2, heading: f64, speed: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
            speed,
        }
    }
}

/// Physical constants of one environment, in its native units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub speed: f64,
    pub wheelbase: f64,
    /// Largest steering magnitude, radians.
    pub max_steer: f64,
    /// Seconds per decision step.
    pub dt: f64,
    pub max_range: f64,
    /// Std-dev of multiplicative Gaussian noise on each return; 0 disables it.
    pub lidar_noise: f64,
    /// Native-to-standard distance ratio. Collision and reward are always
    /// judged on the scan expressed in standard meters.
    pub standard_scale: f64,
    pub reward: RewardParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            wheelbase: 1.0,
            max_steer: 0.5,
            dt: 0.25,
            max_range: 12.0,
            lidar_noise: 0.0,
            standard_scale: 1.0,
            reward: RewardParams::default(),
        }
    }
}

impl EnvConfig {
    /// The same car and sensor shrunk to a world where one native unit is
    /// `beta` standard meters.
    pub fn scaled(self, beta: f64) -> Self {
        Self {
            speed: self.speed / beta,
            wheelbase: self.wheelbase / beta,
            max_range: self.max_range / beta,
            standard_scale: beta,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("speed", self.speed),
            ("wheelbase", self.wheelbase),
            ("max_steer", self.max_steer),
            ("dt", self.dt),
            ("max_range", self.max_range),
            ("standard_scale", self.standard_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "env.{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_steer >= core::f64::consts::FRAC_PI_2 {
            return Err(Error::Config("env.max_steer must be below pi/2".into()));
        }
        if !(self.lidar_noise >= 0.0) {
            return Err(Error::Config("env.lidar_noise must be non-negative".into()));
        }
        self.reward.validate()
    }
}

/// Result of one decision step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Pose after the move (before any respawn).
    pub state: CarState,
    /// Native scan at the moved pose; the reward is computed from it.
    pub observation: Observation,
    pub reward: f64,
    pub collided: bool,
}

/// Kinematic bicycle on a [`Track`]. Single owner, single thread.
#[derive(Clone, Debug)]
pub struct Environment {
    track: Track,
    config: EnvConfig,
    state: CarState,
    observation: Observation,
    rng: ChaCha8Rng,
    clamped_steers: u64,
    respawns: u64,
    lap_crossings: i64,
}

impl Environment {
    /// Builds the environment and performs a seeded [`reset`](Self::reset).
    pub fn new(track: Track, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spawn = track.spawns()[0];
        let state = CarState::new(spawn.position, spawn.heading, config.speed);
        let observation = cast_lidar(&state, &track, config.max_range)?;
        let mut env = Self {
            track,
            config,
            state,
            observation,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clamped_steers: 0,
            respawns: 0,
            lap_crossings: 0,
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Places the car at a seeded-random spawn pose and clears the counters.
    pub fn reset(&mut self, seed: u64) -> Result<(CarState, Observation)> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = self.rng.random_range(0..self.track.spawns().len());
        let spawn = self.track.spawns()[idx];
        self.state = CarState::new(spawn.position, spawn.heading, self.config.speed);
        self.observation = self.scan(&self.state.clone())?;
        self.clamped_steers = 0;
        self.respawns = 0;
        self.lap_crossings = 0;
        Ok((self.state, self.observation.clone()))
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &CarState {
        &self.state
    }

    /// Current native scan (after any respawn).
    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn clamped_steers(&self) -> u64 {
        self.clamped_steers
    }

    pub fn respawns(&self) -> u64 {
        self.respawns
    }

    /// Net forward lap-line crossings since the last reset.
    pub fn laps(&self) -> i64 {
        self.lap_crossings
    }

    fn scan(&mut self, state: &CarState) -> Result<Observation> {
        let clean = cast_lidar(state, &self.track, self.config.max_range)?;
        if self.config.lidar_noise == 0.0 {
            return Ok(clean);
        }
        let sigma = self.config.lidar_noise;
        let cap = self.config.max_range;
        let floor = cap * 1e-6;
        let noisy = clean
            .into_vec()
            .into_iter()
            .map(|d| {
                let n: f64 = StandardNormal.sample(&mut self.rng);
                (d * (1.0 + sigma * n)).clamp(floor, cap)
            })
            .collect();
        Observation::new(noisy)
    }

    fn count_lap(&mut self, from: Vec2, to: Vec2) {
        if let Some(line) = self.track.lap_line() {
            self.lap_crossings += line.crossing(from, to);
        }
    }

    /// Advances one step with steering angle `steer` (radians, native).
    /// Out-of-range steering is clamped and counted.
    pub fn step(&mut self, steer: f64) -> Result<StepOutcome> {
        let max = self.config.max_steer;
        let steer = if steer.is_nan() {
            return Err(Error::Validation("steering command is NaN".into()));
        } else if steer.abs() > max {
            self.clamped_steers += 1;
            steer.clamp(-max, max)
        } else {
            steer
        };

        let c = &self.config;
        let heading = normalize_angle(
            self.state.heading + (self.state.speed / c.wheelbase) * libm::tan(steer) * c.dt,
        );
        let from = self.state.position;
        let to = from + Vec2::from_angle(heading) * (self.state.speed * c.dt);

        let left_free_space =
            !self.track.in_free_space(to) || !self.track.segment_is_clear(from, to);
        let moved = if left_free_space {
            // The move would pass through a wall: the car stops short.
            CarState::new(from, heading, self.state.speed)
        } else {
            CarState::new(to, heading, self.state.speed)
        };
        let observation = self.scan(&moved)?;
        let standard = observation.scaled(self.config.standard_scale);
        let collided = left_free_space
            || detect_collision(standard.as_slice(), self.config.reward.safe_distance);
        let reward =
            reward::reward_with_collision(standard.as_slice(), &self.config.reward, collided)?;
        self.count_lap(from, moved.position);

        if collided {
            let spawn = self.track.nearest_spawn(moved.position);
            self.count_lap(moved.position, spawn.position);
            self.state = CarState::new(spawn.position, spawn.heading, self.config.speed);
            self.observation = self.scan(&self.state.clone())?;
            self.respawns += 1;
        } else {
            self.state = moved;
            self.observation = observation.clone();
        }

        Ok(StepOutcome {
            state: moved,
            observation,
            reward,
            collided,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn open_field() -> Track {
        let boundary =
            Polygon::rectangle(Vec2::new(-500.0, -500.0), Vec2::new(500.0, 500.0)).unwrap();
        Track::new(
            boundary,
            vec![],
            vec![Pose::new(0.0, 0.0, 0.0)],
            "std",
            None,
        )
        .unwrap()
    }

    #[test]
    fn straight_motion() {
        let mut env = Environment::new(open_field(), EnvConfig::default(), 1).unwrap();
        let out = env.step(0.0).unwrap();
        assert_eq!(out.state.heading, 0.0);
        assert_eq!(out.state.position, Vec2::new(0.25, 0.0));
        assert!(!out.collided);
    }

    #[test]
    fn full_lock_curvature_matches_bicycle_model() {
        let config = EnvConfig::default();
        let mut env = Environment::new(open_field(), config, 1).unwrap();
        let mut turned = 0.0;
        let mut travelled = 0.0;
        let mut prev = *env.state();
        for _ in 0..200 {
            let out = env.step(config.max_steer).unwrap();
            turned += normalize_angle(out.state.heading - prev.heading);
            travelled += out.state.position.distance(prev.position);
            prev = out.state;
        }
        let curvature = turned / travelled;
        let expected = libm::tan(config.max_steer) / config.wheelbase;
        assert!(
            (curvature - expected).abs() < 1e-6,
            "{curvature} vs {expected}"
        );
    }

    #[test]
    fn oversteer_is_clamped_and_counted() {
        let mut env = Environment::new(open_field(), EnvConfig::default(), 1).unwrap();
        let a = env.step(2.0).unwrap();
        assert_eq!(env.clamped_steers(), 1);
        let mut env2 = Environment::new(open_field(), EnvConfig::default(), 1).unwrap();
        let b = env2.step(0.5).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(env2.clamped_steers(), 0);
    }

    #[test]
    fn driving_into_wall_collides_and_respawns() {
        let boundary = Polygon::rectangle(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)).unwrap();
        let track = Track::new(
            boundary,
            vec![],
            vec![Pose::new(5.0, 5.0, 0.0)],
            "std",
            None,
        )
        .unwrap();
        let mut env = Environment::new(track, EnvConfig::default(), 1).unwrap();
        let mut hit = None;
        for _ in 0..40 {
            let out = env.step(0.0).unwrap();
            if out.collided {
                hit = Some(out);
                break;
            }
        }
        let out = hit.expect("car never reached the wall");
        assert!(out.observation.min() < 1.1);
        assert!(out.reward < 8.0 - 60.0);
        assert_eq!(env.respawns(), 1);
        assert_eq!(env.state().position, Vec2::new(5.0, 5.0));
    }

    #[test]
    fn reset_is_deterministic_and_draws_from_spawns() {
        let boundary = Polygon::rectangle(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)).unwrap();
        let spawns = vec![
            Pose::new(2.0, 2.0, 0.0),
            Pose::new(8.0, 8.0, 3.0),
            Pose::new(5.0, 2.0, 1.0),
        ];
        let track = Track::new(boundary, vec![], spawns.clone(), "std", None).unwrap();
        let mut env = Environment::new(track, EnvConfig::default(), 0).unwrap();
        for seed in 0..20 {
            let (s1, o1) = env.reset(seed).unwrap();
            let (s2, o2) = env.reset(seed).unwrap();
            assert_eq!(s1, s2);
            assert_eq!(o1, o2);
            assert!(spawns.iter().any(|p| p.position == s1.position));
        }
    }

    #[test]
    fn identical_seed_and_actions_reproduce_trajectory() {
        let config = EnvConfig {
            lidar_noise: 0.05,
            ..EnvConfig::default()
        };
        let boundary = Polygon::rectangle(Vec2::new(0.0, 0.0), Vec2::new(20.0, 20.0)).unwrap();
        let track = Track::new(
            boundary,
            vec![],
            vec![Pose::new(10.0, 10.0, 0.0)],
            "std",
            None,
        )
        .unwrap();
        let run = || {
            let mut env = Environment::new(track.clone(), config, 9).unwrap();
            (0..100)
                .map(|i| env.step(0.3 * libm::sin(i as f64 * 0.1)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scaled_config_divides_lengths() {
        let c = EnvConfig::default().scaled(4.0);
        assert_eq!(c.speed, 0.25);
        assert_eq!(c.wheelbase, 0.25);
        assert_eq!(c.max_range, 3.0);
        assert_eq!(c.standard_scale, 4.0);
    }
}
