//! Frozen-policy evaluation and head-to-head races against the opponent.

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::env::{EnvConfig, EnvRngs, RaceEnv};
use crate::dynamics::DroneState;
use crate::error::{Error, Result};
use crate::geometry::{SpawnOverride, Track};
use crate::opponent::Follower;
use crate::policy::{mean_action, sample_action, ObsNormalizer, PolicyParams};
use crate::reward::Termination;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    /// Act with the Gaussian mean instead of sampling.
    pub deterministic: bool,
    pub seed: u64,
    pub spawn: SpawnOverride,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 100,
            deterministic: true,
            seed: 0,
            spawn: SpawnOverride::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub gates_passed: usize,
    pub collisions: u32,
    pub duration: f64,
    pub termination: Termination,
    pub episodic_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    /// Fraction of episodes that passed every gate.
    pub completion_rate: f64,
    pub mean_gates: f64,
    /// Mean episode duration in seconds.
    pub mean_time: f64,
    pub mean_collisions: f64,
    pub mean_return: f64,
    pub results: Vec<EpisodeResult>,
}

/// What a racer does on each control step.
pub enum PilotAction {
    /// A policy action in the environment's action frame.
    Command(Vec<f64>),
    /// Teleport the agent to this state (scripted pilots).
    State(DroneState),
}

pub trait Pilot {
    /// Called after every environment reset.
    fn reset(&mut self, env: &RaceEnv);
    fn act(&mut self, env: &RaceEnv) -> Result<PilotAction>;
}

/// A trained policy with frozen observation statistics.
pub struct PolicyPilot {
    pub params: PolicyParams,
    pub obs_norm: ObsNormalizer,
    pub deterministic: bool,
    pub rng: Rng,
}

impl PolicyPilot {
    pub fn new(params: PolicyParams, mut obs_norm: ObsNormalizer, deterministic: bool, rng: Rng) -> Self {
        obs_norm.frozen = true;
        Self {
            params,
            obs_norm,
            deterministic,
            rng,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, deterministic: bool, rng: Rng) -> Self {
        Self::new(ckpt.params.clone(), ckpt.obs_norm.clone(), deterministic, rng)
    }
}

impl Pilot for PolicyPilot {
    fn reset(&mut self, _env: &RaceEnv) {}

    fn act(&mut self, env: &RaceEnv) -> Result<PilotAction> {
        let obs = self.obs_norm.apply(env.observation());
        let out = self.params.forward(&obs)?;
        let action = if self.deterministic {
            mean_action(&out.mean)
        } else {
            sample_action(&out.mean, &out.log_std, &mut self.rng).clipped
        };
        Ok(PilotAction::Command(action))
    }
}

/// Flies a private copy of the opponent's plan, reproducing its path exactly.
#[derive(Default)]
pub struct ClonePilot {
    shadow: Option<Follower>,
}

impl Pilot for ClonePilot {
    fn reset(&mut self, env: &RaceEnv) {
        self.shadow = Some(env.opponent.clone());
    }

    fn act(&mut self, env: &RaceEnv) -> Result<PilotAction> {
        let shadow = self
            .shadow
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("clone pilot used before reset".into()))?;
        Ok(PilotAction::State(shadow.advance(env.cfg.dynamics.dt)?))
    }
}

fn eval_env(cfg: &EnvConfig, track: &Track, spawn: SpawnOverride, seed: u64) -> Result<RaceEnv> {
    let rngs = EnvRngs {
        spawn: stream(seed, Stream::Eval, 0),
        sensors: stream(seed, Stream::Eval, 1),
        track: stream(seed, Stream::Eval, 2),
    };
    RaceEnv::new(cfg.for_evaluation(spawn), track.clone(), rngs)
}

fn run_episode(env: &mut RaceEnv, pilot: &mut dyn Pilot) -> Result<EpisodeResult> {
    pilot.reset(env);
    loop {
        let outcome = match pilot.act(env)? {
            PilotAction::Command(a) => env.step(&a)?,
            PilotAction::State(s) => env.step_with_state(s)?,
        };
        if outcome.done() {
            let s = &env.status;
            return Ok(EpisodeResult {
                gates_passed: s.gates_passed - s.start_gate,
                collisions: s.collisions,
                duration: env.agent.time,
                termination: s.done,
                episodic_return: s.episode_return,
            });
        }
    }
}

/// Run `opts.episodes` episodes of `pilot` on `track`.
pub fn evaluate_pilot(cfg: &EnvConfig, track: &Track, pilot: &mut dyn Pilot, opts: &EvalOptions) -> Result<EvalSummary> {
    if opts.episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be positive".into()));
    }
    let mut env = eval_env(cfg, track, opts.spawn, opts.seed)?;
    let mut results = Vec::with_capacity(opts.episodes);
    for i in 0..opts.episodes {
        if i > 0 {
            env.reset()?;
        }
        results.push(run_episode(&mut env, pilot)?);
    }
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        episodes: results.len(),
        completion_rate: mean(&|r| (r.termination == Termination::AllGates) as u8 as f64),
        mean_gates: mean(&|r| r.gates_passed as f64),
        mean_time: mean(&|r| r.duration),
        mean_collisions: mean(&|r| r.collisions as f64),
        mean_return: mean(&|r| r.episodic_return),
        results,
    })
}

/// Evaluate a checkpoint's policy with frozen statistics.
pub fn evaluate(ckpt: &Checkpoint, track: &Track, opts: &EvalOptions) -> Result<EvalSummary> {
    let cfg = EnvConfig::from_run(&ckpt.config);
    let mut pilot = PolicyPilot::from_checkpoint(ckpt, opts.deterministic, stream(opts.seed, Stream::Eval, 3));
    evaluate_pilot(&cfg, track, &mut pilot, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceOutcome {
    AgentWin,
    OpponentWin,
    AgentDnf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceSummary {
    pub agent_wins: usize,
    pub opponent_wins: usize,
    pub agent_dnfs: usize,
    pub outcomes: Vec<RaceOutcome>,
}

/// Both drones fly the same track in lockstep; the first through every
/// gate wins and a same-step finish goes to the opponent.
pub fn race_pilot(cfg: &EnvConfig, track: &Track, pilot: &mut dyn Pilot, episodes: usize, seed: u64) -> Result<RaceSummary> {
    let mut env = eval_env(cfg, track, SpawnOverride::default(), seed)?;
    let mut outcomes = Vec::with_capacity(episodes);
    for i in 0..episodes {
        if i > 0 {
            env.reset()?;
        }
        let result = run_episode(&mut env, pilot)?;
        let outcome = match (result.termination, env.agent_finish, env.opponent_finish) {
            (Termination::AllGates, Some(a), Some(o)) if a >= o => RaceOutcome::OpponentWin,
            (Termination::AllGates, _, _) => RaceOutcome::AgentWin,
            _ => RaceOutcome::AgentDnf,
        };
        outcomes.push(outcome);
    }
    let count = |o| outcomes.iter().filter(|&&x| x == o).count();
    Ok(RaceSummary {
        agent_wins: count(RaceOutcome::AgentWin),
        opponent_wins: count(RaceOutcome::OpponentWin),
        agent_dnfs: count(RaceOutcome::AgentDnf),
        outcomes,
    })
}

/// Race a checkpoint's deterministic policy against the opponent.
pub fn race(ckpt: &Checkpoint, track: &Track, episodes: usize, seed: u64) -> Result<RaceSummary> {
    let cfg = EnvConfig::from_run(&ckpt.config);
    let mut pilot = PolicyPilot::from_checkpoint(ckpt, true, stream(seed, Stream::Eval, 3));
    race_pilot(&cfg, track, &mut pilot, episodes, seed)
}
