//! The racing environment: agent dynamics, the opponent, gate events and
//! reward, stepped in lockstep at the control rate.

use rand::Rng as _;

use super::config::{ActionFrame, RunConfig};
use crate::dynamics::{self, read_gps, read_imu, DroneState, DynamicsConfig, ImuReading, VelocityCommand};
use crate::error::{Error, Result};
use crate::geometry::{generate_track, sample_spawn_with, segment_gate_crossing, SpawnOverride, Track, TrackGenConfig};
use crate::opponent::{expected_gate_times, plan_from, Follower, OpponentConfig};
use crate::reward::{compute_step, detect_events, init_status_at, EpisodeStatus, RewardConfig, StepEvents, Termination};
use crate::rng::Rng;
use crate::vec3::{wrap_angle, Vec3};

pub const OBS_DIM: usize = 21;
pub const ACT_DIM: usize = 3;

pub type Observation = [f64; OBS_DIM];

/// Sensor readings the agent observes at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensors {
    pub imu: ImuReading,
    pub gps: Vec3,
}

/// Assemble the policy input.
///
/// Layout: IMU velocity in the yaw frame (0..3), IMU angular velocity
/// (3..6), roll/pitch/yaw (6..9), GPS position (9..12), target gate center
/// relative to the drone in the yaw frame (12..15), target gate yaw relative
/// to the drone (15), opponent GPS relative to the drone in the yaw frame
/// (16..19), fraction of gates passed (19), gate timer remaining divided by
/// `timer_scale` and clamped to [-1, 1] (20).
pub fn build_observation(
    agent: &DroneState,
    opponent_gps: Vec3,
    status: &EpisodeStatus,
    track: &Track,
    sensors: &Sensors,
    timer_scale: f64,
) -> Result<Observation> {
    if status.done.is_done() {
        return Err(Error::EpisodeDone(status.done));
    }
    let gate = track.gate(status.target_gate)?;
    let yaw = sensors.imu.attitude.yaw;
    let to_frame = |w: Vec3| w.rotate_z(-yaw);
    let vel = to_frame(sensors.imu.linear_velocity);
    let target = to_frame(gate.center - sensors.gps);
    let opp = to_frame(opponent_gps - sensors.gps);
    let remaining = status.gate_deadline - agent.time;
    let timer = if remaining.is_finite() {
        (remaining / timer_scale).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    let w = sensors.imu.angular_velocity;
    let a = sensors.imu.attitude;
    Ok([
        vel.x,
        vel.y,
        vel.z,
        w.x,
        w.y,
        w.z,
        a.roll,
        a.pitch,
        a.yaw,
        sensors.gps.x,
        sensors.gps.y,
        sensors.gps.z,
        target.x,
        target.y,
        target.z,
        wrap_angle(gate.yaw - yaw),
        opp.x,
        opp.y,
        opp.z,
        status.gates_passed as f64 / track.len() as f64,
        timer,
    ])
}

/// Everything the environment needs besides its random streams.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dynamics: DynamicsConfig,
    pub reward: RewardConfig,
    pub opponent: OpponentConfig,
    pub drone_radius: f64,
    pub random_spawn_gate: bool,
    pub timer_scale: f64,
    pub spawn: SpawnOverride,
    /// Uniform yaw perturbation at spawn, radians either side.
    pub spawn_yaw_jitter: f64,
    pub action_frame: ActionFrame,
    /// Generate a new track from this config at every reset.
    pub regenerate: Option<TrackGenConfig>,
}

impl EnvConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            dynamics: cfg.dynamics.clone(),
            reward: cfg.reward.clone(),
            opponent: cfg.opponent.clone(),
            drone_radius: cfg.harness.drone_radius,
            random_spawn_gate: cfg.harness.random_spawn_gate,
            timer_scale: cfg.harness.timer_scale,
            spawn: SpawnOverride::default(),
            spawn_yaw_jitter: cfg.harness.spawn_yaw_jitter_deg.to_radians(),
            action_frame: cfg.harness.action_frame,
            regenerate: cfg.track.randomize_per_episode.then(|| cfg.track.generator.clone()),
        }
    }

    /// Fixed track, first-gate spawns and no training-only perturbations.
    pub fn for_evaluation(&self, spawn: SpawnOverride) -> Self {
        Self {
            random_spawn_gate: false,
            spawn,
            spawn_yaw_jitter: 0.0,
            regenerate: None,
            ..self.clone()
        }
    }
}

/// The random streams owned by one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvRngs {
    pub spawn: Rng,
    pub sensors: Rng,
    pub track: Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Raw (unscaled) reward.
    pub reward: f64,
    pub termination: Termination,
    pub events: StepEvents,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.termination.is_done()
    }
}

/// One agent and one opponent on a shared track.
#[derive(Debug, Clone, PartialEq)]
pub struct RaceEnv {
    pub cfg: EnvConfig,
    pub track: Track,
    pub agent: DroneState,
    pub opponent: Follower,
    /// Opponent-paced times to each remaining gate, from episode start.
    pub opponent_times: Vec<f64>,
    pub status: EpisodeStatus,
    /// Gates the opponent has flown through this episode.
    pub opponent_gates: usize,
    /// Control step at which each drone passed its last gate.
    pub opponent_finish: Option<u64>,
    pub agent_finish: Option<u64>,
    pub steps: u64,
    pub rngs: EnvRngs,
    obs: Observation,
}

impl RaceEnv {
    /// Build and reset an environment.
    pub fn new(cfg: EnvConfig, track: Track, rngs: EnvRngs) -> Result<Self> {
        track.validate()?;
        let placeholder = DroneState::default();
        let mut env = Self {
            opponent: Follower::new(plan_from(&track, 0, &cfg.opponent)?, placeholder),
            cfg,
            track,
            agent: placeholder,
            opponent_times: Vec::new(),
            status: EpisodeStatus::default(),
            opponent_gates: 0,
            opponent_finish: None,
            agent_finish: None,
            steps: 0,
            rngs,
            obs: [0.0; OBS_DIM],
        };
        env.reset()?;
        Ok(env)
    }

    /// Restore an environment captured mid-episode, observation included.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        cfg: EnvConfig,
        track: Track,
        agent: DroneState,
        opponent: Follower,
        opponent_times: Vec<f64>,
        status: EpisodeStatus,
        opponent_gates: usize,
        opponent_finish: Option<u64>,
        agent_finish: Option<u64>,
        steps: u64,
        rngs: EnvRngs,
        obs: Observation,
    ) -> Self {
        Self {
            cfg,
            track,
            agent,
            opponent,
            opponent_times,
            status,
            opponent_gates,
            opponent_finish,
            agent_finish,
            steps,
            rngs,
            obs,
        }
    }

    /// Raw observation of the current state.
    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn is_done(&self) -> bool {
        self.status.done.is_done()
    }

    /// Start a new episode: optionally a new track, then a fresh spawn.
    pub fn reset(&mut self) -> Result<()> {
        if let Some(gen) = &self.cfg.regenerate {
            self.track = generate_track(gen, &mut self.rngs.track)?;
        }
        let start_gate = if self.cfg.random_spawn_gate {
            self.rngs.spawn.random_range(0..self.track.len())
        } else {
            0
        };
        let mut spawn = sample_spawn_with(&self.track, start_gate, self.cfg.spawn, &mut self.rngs.spawn)?;
        if self.cfg.spawn_yaw_jitter > 0.0 {
            let j = self.cfg.spawn_yaw_jitter;
            spawn.attitude.yaw = wrap_angle(spawn.attitude.yaw + self.rngs.spawn.random_range(-j..=j));
        }
        let plan = plan_from(&self.track, start_gate, &self.cfg.opponent)?;
        self.opponent_times = expected_gate_times(&plan, spawn.position);
        self.status = init_status_at(&self.track, start_gate, &self.opponent_times, &self.cfg.reward, spawn.time)?;
        self.opponent = Follower::new(plan, spawn);
        self.agent = spawn;
        self.opponent_gates = 0;
        self.opponent_finish = None;
        self.agent_finish = None;
        self.steps = 0;
        self.obs = self.observe()?;
        Ok(())
    }

    /// The world-frame command for a policy action.
    pub fn command(&self, action: &[f64]) -> Result<VelocityCommand> {
        if action.len() != ACT_DIM {
            return Err(Error::Dimension { expected: ACT_DIM, found: action.len() });
        }
        let dv = Vec3::new(action[0], action[1], action[2]);
        let dv = match self.cfg.action_frame {
            ActionFrame::World => dv,
            ActionFrame::Yaw => dv.rotate_z(self.agent.attitude.yaw),
        };
        Ok(VelocityCommand::new(dv))
    }

    /// Advance one control step with a policy action.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone(self.status.done));
        }
        let cmd = self.command(action)?;
        let next = dynamics::step(&self.agent, cmd, self.cfg.dynamics.dt, &self.cfg.dynamics)?;
        self.step_with_state(next)
    }

    /// Advance one control step with the agent moved directly to `next`.
    pub fn step_with_state(&mut self, next: DroneState) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone(self.status.done));
        }
        let dt = self.cfg.dynamics.dt;
        let prev_opp = self.opponent.state;
        let opp = self.opponent.advance(dt)?;
        let start = self.status.start_gate;
        if let Some(gate) = self.track.gates.get(start + self.opponent_gates) {
            if segment_gate_crossing(prev_opp.position, opp.position, gate).is_some() {
                self.opponent_gates += 1;
                if start + self.opponent_gates == self.track.len() {
                    self.opponent_finish = Some(self.steps + 1);
                }
            }
        }

        let prev = self.agent;
        let events = detect_events(&prev, &next, &self.status, &self.track, &self.cfg.reward, self.cfg.drone_radius);
        let (reward, status) = compute_step(
            &prev,
            &next,
            &self.status,
            &events,
            &self.cfg.reward,
            &self.opponent_times,
            &self.track,
        )?;
        if !next.is_finite() || !reward.is_finite() {
            return Err(Error::NonFinite(format!(
                "step {} of episode: state {next:?}, reward {reward}",
                self.steps + 1
            )));
        }
        self.agent = next;
        self.status = status;
        self.steps += 1;
        if status.done == Termination::AllGates {
            self.agent_finish = Some(self.steps);
        }
        if !status.done.is_done() {
            self.obs = self.observe()?;
            if self.obs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation at step {}: {:?}", self.steps, self.obs)));
            }
        }
        Ok(StepOutcome {
            reward,
            termination: status.done,
            events,
        })
    }

    fn observe(&mut self) -> Result<Observation> {
        let d = &self.cfg.dynamics;
        let imu = read_imu(&self.agent, &d.imu_noise_std, &mut self.rngs.sensors);
        let gps = read_gps(&self.agent, d.gps_noise_std, &mut self.rngs.sensors);
        let opponent_gps = read_gps(&self.opponent.state, d.gps_noise_std, &mut self.rngs.sensors);
        build_observation(
            &self.agent,
            opponent_gps,
            &self.status,
            &self.track,
            &Sensors { imu, gps },
            self.cfg.timer_scale,
        )
    }
}
