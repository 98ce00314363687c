//! Experiment configuration: an INI file with the sections `[experiment]`,
//! `[ddpg]`, `[reward]`, `[env]`, `[federation]`, `[pretrain]`, `[eval]`
//! and one `[agent.N]` per agent. See `configs/` for annotated examples.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ftrl_core::ddpg::{DdpgHyperparams, TrainGate};
use ftrl_core::env::{EnvConfig, RewardParams, Track};
use ftrl_core::federation::{AgentId, ClockMode, FederationConfig};
use ftrl_core::metrics::StageConfig;
use ftrl_core::transfer::{validate_roster, TransferProfile, DEFAULT_CAR_BETA};

use crate::error::{Error, Result};
use crate::ini::{IniDoc, Section};
use crate::track_io::load_track;
use crate::tracks::BuiltinTrack;

pub const DEFAULT_ADDRESS: &str = "127.0.0.1:7878";
/// Cycle defaults in steps for the virtual clock.
pub const VIRTUAL_FEDERATION_CYCLE: f64 = 480.0;
pub const VIRTUAL_SYNC_CYCLE: f64 = 720.0;
/// Cycle defaults in seconds for the wall clock.
pub const WALL_FEDERATION_CYCLE: f64 = 120.0;
pub const WALL_SYNC_CYCLE: f64 = 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Independent agents, no server.
    Solo,
    /// Federated agents of one kind.
    Ftrl,
    /// Federated agents joined by one standard-scale environment.
    FtrlSim,
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solo" => Ok(Self::Solo),
            "ftrl" => Ok(Self::Ftrl),
            "ftrl_sim" => Ok(Self::FtrlSim),
            other => Err(format!(
                "unknown scenario `{other}` (expected solo, ftrl or ftrl_sim)"
            )),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Solo => "solo",
            Self::Ftrl => "ftrl",
            Self::FtrlSim => "ftrl_sim",
        })
    }
}

impl Scenario {
    pub fn federated(self) -> bool {
        self != Self::Solo
    }
}

pub fn parse_clock(s: &str) -> std::result::Result<ClockMode, String> {
    match s {
        "virtual" => Ok(ClockMode::Virtual),
        "wall" => Ok(ClockMode::Wall),
        other => Err(format!(
            "unknown clock `{other}` (expected virtual or wall)"
        )),
    }
}

pub fn clock_name(c: ClockMode) -> &'static str {
    match c {
        ClockMode::Virtual => "virtual",
        ClockMode::Wall => "wall",
    }
}

fn parse_gate(s: &str) -> std::result::Result<TrainGate, String> {
    match s {
        "batch" => Ok(TrainGate::Batch),
        "full" => Ok(TrainGate::Full),
        other => Err(format!(
            "unknown train gate `{other}` (expected batch or full)"
        )),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub id: AgentId,
    /// Training course in the agent's native units.
    pub track: Track,
    /// Held-out course for the post-training evaluation.
    pub eval_track: Option<Track>,
    pub profile: TransferProfile,
    /// Explicit seed; otherwise derived from the experiment seed.
    pub seed: Option<u64>,
    pub lidar_noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainSpec {
    pub track: Track,
    pub profile: TransferProfile,
    pub steps: u64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Steps per agent.
    pub steps: u64,
    pub seed: u64,
    pub output: PathBuf,
    pub clock: ClockMode,
    /// Wall clock only: simulated seconds per wall second; 0 runs unpaced.
    pub pace: f64,
    pub train_gate: TrainGate,
    pub stages: StageConfig,
    pub ddpg: DdpgHyperparams,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    /// Car and sensor in standard meters; each agent scales it by its beta.
    pub env: EnvConfig,
    /// Explicit cycles; `None` picks the default for the clock in use.
    pub federation_cycle: Option<f64>,
    pub sync_cycle: Option<f64>,
    pub address: String,
    pub pretrain: Option<PretrainSpec>,
    /// Laps driven by each evaluation; 0 skips evaluation.
    pub eval_cycles: u64,
    pub agents: Vec<AgentSpec>,
}

enum TrackSource {
    Builtin(BuiltinTrack),
    File(PathBuf),
}

impl TrackSource {
    fn parse(value: &str, base: &Path) -> std::result::Result<Self, String> {
        match value.strip_prefix("builtin:") {
            Some(name) => Ok(Self::Builtin(name.parse()?)),
            None if value.is_empty() => Err("empty track path".into()),
            None => Ok(Self::File(base.join(value))),
        }
    }

    /// Builtins are built at `beta` with `label`; files must already carry
    /// `label` when one is required.
    fn resolve(
        &self,
        beta: f64,
        label: Option<&str>,
        default_label: &str,
    ) -> std::result::Result<Track, String> {
        match self {
            Self::Builtin(b) => b
                .build(beta, label.unwrap_or(default_label))
                .map_err(|e| e.to_string()),
            Self::File(path) => {
                let track = load_track(path).map_err(|e| e.to_string())?;
                match label {
                    Some(l) if l != track.scale_label() => Err(format!(
                        "{} is labelled `{}`, expected `{l}`",
                        path.display(),
                        track.scale_label()
                    )),
                    _ => Ok(track),
                }
            }
        }
    }
}

fn track_from(
    section: &mut Section,
    key: &str,
    value: &str,
    base: &Path,
    beta: f64,
    label: Option<&str>,
    default_label: &str,
) -> Result<Track> {
    TrackSource::parse(value, base)
        .and_then(|src| src.resolve(beta, label, default_label))
        .map_err(|m| section.invalid(key, m))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self> {
        let mut doc = IniDoc::parse(text, origin)?;
        for s in &doc.sections {
            let known = matches!(
                s.name.as_str(),
                "experiment" | "ddpg" | "reward" | "env" | "federation" | "pretrain" | "eval"
            ) || s.name.starts_with("agent.");
            if !known {
                return Err(Error::config(s.name.clone(), "unknown section"));
            }
        }
        let mut sec = doc.take("experiment");
        let scenario: Scenario = sec
            .require("scenario")?
            .parse()
            .map_err(|m: String| sec.invalid("scenario", m))?;
        let steps = sec.get_or("steps", 7500u64)?;
        let seed = sec.get_or("seed", 0u64)?;
        let output = base.join(sec.raw("output").unwrap_or_else(|| "out".into()));
        let clock = match sec.raw("clock") {
            Some(v) => parse_clock(&v).map_err(|m| sec.invalid("clock", m))?,
            None => ClockMode::Virtual,
        };
        let pace = sec.f64_or("pace", 1.0)?;
        if pace < 0.0 {
            return Err(sec.invalid("pace", "must be non-negative"));
        }
        let train_gate = match sec.raw("train_gate") {
            Some(v) => parse_gate(&v).map_err(|m| sec.invalid("train_gate", m))?,
            None => TrainGate::Batch,
        };
        let stages = StageConfig {
            stage_len: sec.get_or("stage_len", StageConfig::default().stage_len)?,
            warmup_stages: sec.get_or("warmup_stages", StageConfig::default().warmup_stages)?,
        };
        if stages.stage_len == 0 {
            return Err(sec.invalid("stage_len", "must be positive"));
        }
        sec.finish()?;

        let mut sec = doc.take("ddpg");
        let d = DdpgHyperparams::default();
        let hidden_layers = match sec.raw("hidden_layers") {
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| sec.invalid("hidden_layers", format!("cannot parse `{v}`: {e}")))?,
            None => d.hidden_layers.clone(),
        };
        let ddpg = DdpgHyperparams {
            gamma: sec.f64_or("gamma", d.gamma)?,
            tau: sec.f64_or("tau", d.tau)?,
            actor_lr: sec.f64_or("actor_lr", d.actor_lr)?,
            critic_lr: sec.f64_or("critic_lr", d.critic_lr)?,
            buffer_capacity: sec.get_or("buffer_capacity", d.buffer_capacity)?,
            batch_size: sec.get_or("batch_size", d.batch_size)?,
            hidden_layers,
        };
        let ou_theta = sec.f64_or("ou_theta", 0.15)?;
        let ou_sigma = sec.f64_or("ou_sigma", 0.2)?;
        if ou_theta < 0.0 || ou_sigma < 0.0 {
            return Err(sec.invalid("ou_sigma", "OU parameters must be non-negative"));
        }
        sec.finish()?;
        ddpg.validate()?;

        let mut sec = doc.take("reward");
        let r = RewardParams::default();
        let reward = RewardParams {
            base_reward: sec.f64_or("base_reward", r.base_reward)?,
            collision_penalty: sec.f64_or("collision_penalty", r.collision_penalty)?,
            safe_distance: sec.f64_or("safe_distance", r.safe_distance)?,
            exponent_offset: sec.f64_or("exponent_offset", r.exponent_offset)?,
            fraction: sec.f64_or("fraction", r.fraction)?,
        };
        sec.finish()?;

        let mut sec = doc.take("env");
        let e = EnvConfig::default();
        let env = EnvConfig {
            speed: sec.f64_or("speed", e.speed)?,
            wheelbase: sec.f64_or("wheelbase", e.wheelbase)?,
            max_steer: sec.f64_or("max_steer", e.max_steer)?,
            dt: sec.f64_or("dt", e.dt)?,
            max_range: sec.f64_or("max_range", e.max_range)?,
            lidar_noise: sec.f64_or("lidar_noise", e.lidar_noise)?,
            standard_scale: 1.0,
            reward,
        };
        sec.finish()?;
        env.validate()?;
        reward.window(ftrl_core::env::BEAMS)?;

        let mut sec = doc.take("federation");
        let federation_cycle = sec.get::<f64>("federation_cycle")?;
        let sync_cycle = sec.get::<f64>("sync_cycle")?;
        let address = sec.raw("address").unwrap_or_else(|| DEFAULT_ADDRESS.into());
        for (key, v) in [
            ("federation_cycle", federation_cycle),
            ("sync_cycle", sync_cycle),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(sec.invalid(key, format!("must be positive, got {v}")));
                }
            }
        }
        sec.finish()?;

        let pretrain = match doc.take_opt("pretrain") {
            None => None,
            Some(mut sec) => {
                let beta = sec.f64_or("beta", 1.0)?;
                let label = sec.raw("scale");
                let default_label = if beta == 1.0 { "std" } else { "car" };
                let value = sec.require("track")?;
                let track = track_from(
                    &mut sec,
                    "track",
                    &value,
                    base,
                    beta,
                    label.as_deref(),
                    default_label,
                )?;
                let profile = if beta == 1.0 {
                    TransferProfile::standard(track.scale_label(), env.max_steer)
                } else {
                    TransferProfile::new(track.scale_label(), beta, env.max_steer)
                }
                .map_err(|e| sec.invalid("beta", e.to_string()))?;
                let spec = PretrainSpec {
                    track,
                    profile,
                    steps: sec.get_or("steps", 2500u64)?,
                    seed: sec.get("seed")?,
                };
                sec.finish()?;
                Some(spec)
            }
        };

        let mut sec = doc.take("eval");
        let eval_cycles = sec.get_or("cycles", 50u64)?;
        let eval_default = sec.raw("track").unwrap_or_else(|| "builtin:test".into());
        sec.finish()?;

        let mut agents = Vec::new();
        for sec in doc
            .sections
            .iter_mut()
            .filter(|s| s.name.starts_with("agent."))
        {
            agents.push(parse_agent(
                sec,
                base,
                &env,
                &eval_default,
                eval_cycles > 0,
            )?);
        }
        agents.sort_by_key(|a| a.id);

        let cfg = Self {
            scenario,
            steps,
            seed,
            output,
            clock,
            pace,
            train_gate,
            stages,
            ddpg,
            ou_theta,
            ou_sigma,
            env,
            federation_cycle,
            sync_cycle,
            address,
            pretrain,
            eval_cycles,
            agents,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scenario-level invariants.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("experiment.steps", "must be positive"));
        }
        let needed = if self.scenario.federated() { 2 } else { 1 };
        if self.agents.len() < needed {
            return Err(Error::config(
                "agent",
                format!(
                    "scenario {} needs at least {needed} agents, found {}",
                    self.scenario,
                    self.agents.len()
                ),
            ));
        }
        let profiles: Vec<&TransferProfile> = self.agents.iter().map(|a| &a.profile).collect();
        validate_roster(&profiles).map_err(|e| Error::config("agent", e.to_string()))?;
        if self.scenario == Scenario::FtrlSim {
            let standard = profiles.iter().filter(|p| p.is_standard()).count();
            if standard != 1 {
                return Err(Error::config(
                    "agent",
                    format!(
                        "ftrl_sim needs exactly one agent with standard = true, found {standard}"
                    ),
                ));
            }
            if !profiles.iter().any(|p| p.beta() != 1.0) {
                return Err(Error::config(
                    "agent",
                    "ftrl_sim needs at least one agent with beta != 1",
                ));
            }
        }
        for w in self.agents.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::config(
                    format!("agent.{}", w[0].id),
                    "duplicate agent id",
                ));
            }
        }
        self.federation().validate()?;
        Ok(())
    }

    pub fn federation(&self) -> FederationConfig {
        let (fed, sync) = match self.clock {
            ClockMode::Virtual => (VIRTUAL_FEDERATION_CYCLE, VIRTUAL_SYNC_CYCLE),
            ClockMode::Wall => (WALL_FEDERATION_CYCLE, WALL_SYNC_CYCLE),
        };
        FederationConfig {
            federation_cycle: self.federation_cycle.unwrap_or(fed),
            sync_cycle: self.sync_cycle.unwrap_or(sync),
            expected_agents: self.agents.len(),
            clock_mode: self.clock,
        }
    }

    pub fn agent_seed(&self, agent: &AgentSpec) -> u64 {
        agent.seed.unwrap_or_else(|| {
            self.seed
                .wrapping_mul(1_000_003)
                .wrapping_add(agent.id as u64 + 1)
        })
    }

    pub fn pretrain_seed(&self) -> u64 {
        self.pretrain
            .as_ref()
            .and_then(|p| p.seed)
            .unwrap_or_else(|| self.seed.wrapping_mul(1_000_003))
    }

    /// The agent's physics in its native units.
    pub fn agent_env(&self, agent: &AgentSpec) -> EnvConfig {
        EnvConfig {
            lidar_noise: agent.lidar_noise,
            ..self.env.scaled(agent.profile.beta())
        }
    }
}

fn parse_agent(
    sec: &mut Section,
    base: &Path,
    env: &EnvConfig,
    eval_default: &str,
    want_eval: bool,
) -> Result<AgentSpec> {
    let id: AgentId = sec.name["agent.".len()..].parse().map_err(|_| {
        Error::config(
            sec.name.clone(),
            "agent sections are named agent.N with N a non-negative integer",
        )
    })?;
    let standard = sec.get_or("standard", false)?;
    let beta = match (standard, sec.get::<f64>("beta")?) {
        (true, Some(b)) if b != 1.0 => {
            return Err(sec.invalid("beta", format!("a standard agent has beta 1, got {b}")))
        }
        (true, _) => 1.0,
        (false, b) => b.unwrap_or(DEFAULT_CAR_BETA),
    };
    let max_action = sec.f64_or("max_action", env.max_steer)?;
    let label = sec.raw("scale");
    let default_label = if standard { "std" } else { "car" };
    let value = sec.require("track")?;
    let track = track_from(
        sec,
        "track",
        &value,
        base,
        beta,
        label.as_deref(),
        default_label,
    )?;
    let label = track.scale_label().to_string();
    let eval_track = match (sec.raw("eval_track"), want_eval) {
        (Some(v), _) => Some(track_from(
            sec,
            "eval_track",
            &v,
            base,
            beta,
            Some(&label),
            &label,
        )?),
        (None, true) => Some(track_from(
            sec,
            "eval_track",
            eval_default,
            base,
            beta,
            Some(&label),
            &label,
        )?),
        (None, false) => None,
    };
    if let Some(t) = &eval_track {
        if t.lap_line().is_none() {
            return Err(sec.invalid("eval_track", "evaluation track has no lap line"));
        }
    }
    let profile = if standard {
        TransferProfile::standard(label, max_action)
    } else {
        TransferProfile::new(label, beta, max_action)
    }
    .map_err(|e| sec.invalid("beta", e.to_string()))?;
    let lidar_noise = sec.f64_or("lidar_noise", env.lidar_noise)?;
    if lidar_noise < 0.0 {
        return Err(sec.invalid("lidar_noise", "must be non-negative"));
    }
    let spec = AgentSpec {
        id,
        track,
        eval_track,
        profile,
        seed: sec.get("seed")?,
        lidar_noise,
    };
    sec.finish()?;
    Ok(spec)
}
