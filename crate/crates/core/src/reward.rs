//! Reward shaping, gate timers and episode termination.
//!
//! Per-step reward is the sum of
//! - progress: `progress_coef * (d_prev - d_next)` toward the target gate center,
//! - a proximity bonus while within `proximity_radius` of the target,
//! - `pass_reward` for a directed pass through the target opening,
//! - `collision_penalty` for touching any gate frame,
//! - `stuck_penalty` while loitering near the last passed gate after its timer ran out.
//!
//! Gate timers are budgeted from the opponent's expected pace: after each
//! pass the next deadline is `timer_multiplier` times the opponent's time
//! between the two gates. Rewards are emitted raw; scaling happens in the
//! trainer.

use serde::{Deserialize, Serialize};

use crate::dynamics::DroneState;
use crate::error::{Error, Result};
use crate::geometry::{segment_frame_collision, segment_gate_crossing, PassEvent, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub progress_coef: f64,
    pub proximity_bonus: f64,
    pub pass_reward: f64,
    pub collision_penalty: f64,
    pub stuck_penalty: f64,
    pub timer_multiplier: f64,
    pub proximity_radius: f64,
    pub pass_check_radius: f64,
    pub max_divergence: f64,
    pub collision_limit: u32,
    /// Overrides the track's own time limit when set.
    pub time_limit: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            progress_coef: 1.0,
            proximity_bonus: 0.1,
            pass_reward: 50.0,
            collision_penalty: -10.0,
            stuck_penalty: -0.5,
            timer_multiplier: 2.0,
            proximity_radius: 3.0,
            pass_check_radius: 0.5,
            max_divergence: 20.0,
            collision_limit: 5,
            time_limit: None,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.proximity_radius > self.pass_check_radius
            && self.pass_check_radius > 0.0
            && self.pass_reward > 0.0
            && self.collision_penalty <= 0.0
            && self.stuck_penalty <= 0.0
            && self.timer_multiplier >= 1.0
            && self.max_divergence > 0.0
            && self.collision_limit > 0
            && self.time_limit.is_none_or(|t| t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("reward config violates its invariants".into()))
        }
    }

    pub fn effective_time_limit(&self, track: &Track) -> f64 {
        self.time_limit.unwrap_or(track.time_limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    #[default]
    None,
    AllGates,
    TooFar,
    CollisionLimit,
    TimeLimit,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::None
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        use Termination::*;
        [None, AllGates, TooFar, CollisionLimit, TimeLimit].get(c as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub start_gate: usize,
    pub target_gate: usize,
    pub gate_deadline: f64,
    pub collisions: u32,
    pub gates_passed: usize,
    pub done: Termination,
    pub episode_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEvents {
    pub pass: Option<PassEvent>,
    pub collision: bool,
}

pub fn init_status(track: &Track, opponent_times: &[f64], cfg: &RewardConfig, t0: f64) -> Result<EpisodeStatus> {
    init_status_at(track, 0, opponent_times, cfg, t0)
}

/// Status for an episode that begins in front of `start_gate`; gates before
/// it count as passed and `opponent_times` covers the remaining gates.
pub fn init_status_at(
    track: &Track,
    start_gate: usize,
    opponent_times: &[f64],
    cfg: &RewardConfig,
    t0: f64,
) -> Result<EpisodeStatus> {
    track.gate(start_gate)?;
    let remaining = track.len() - start_gate;
    if opponent_times.len() != remaining {
        return Err(Error::Dimension {
            expected: remaining,
            found: opponent_times.len(),
        });
    }
    Ok(EpisodeStatus {
        start_gate,
        target_gate: start_gate,
        gate_deadline: t0 + cfg.timer_multiplier * opponent_times[0],
        collisions: 0,
        gates_passed: start_gate,
        done: Termination::None,
        episode_return: 0.0,
    })
}

/// Pass and collision events for the move `prev -> next`.
///
/// The crossing test only runs once the drone is within `pass_check_radius`
/// plus this step's travel of the target opening, which cannot miss a pass.
pub fn detect_events(
    prev: &DroneState,
    next: &DroneState,
    status: &EpisodeStatus,
    track: &Track,
    cfg: &RewardConfig,
    drone_radius: f64,
) -> StepEvents {
    let (p0, p1) = (prev.position, next.position);
    let travel = p0.distance(p1);
    let pass = track.gates.get(status.target_gate).and_then(|gate| {
        if gate.distance_to_opening(p1) >= cfg.pass_check_radius + travel {
            return None;
        }
        segment_gate_crossing(p0, p1, gate).map(|x| {
            let s0 = gate.to_local(p0).n;
            let s1 = gate.to_local(p1).n;
            PassEvent {
                gate_id: gate.id,
                time: prev.time + (next.time - prev.time) * (s0 / (s0 - s1)),
                crossing_point: x,
            }
        })
    });
    let collision = track
        .gates
        .iter()
        .any(|g| segment_frame_collision(p0, p1, g, drone_radius));
    StepEvents { pass, collision }
}

/// Reward for one transition and the updated status.
pub fn compute_step(
    prev: &DroneState,
    next: &DroneState,
    status: &EpisodeStatus,
    events: &StepEvents,
    cfg: &RewardConfig,
    opponent_times: &[f64],
    track: &Track,
) -> Result<(f64, EpisodeStatus)> {
    if status.done.is_done() {
        return Err(Error::EpisodeDone(status.done));
    }
    let target = track.gate(status.target_gate)?;
    let d_prev = prev.position.distance(target.center);
    let d_next = next.position.distance(target.center);

    let mut reward = cfg.progress_coef * (d_prev - d_next);
    if d_next < cfg.proximity_radius {
        reward += cfg.proximity_bonus;
    }
    if status.gates_passed > 0 && next.time > status.gate_deadline {
        let last = &track.gates[status.gates_passed - 1];
        if next.position.distance(last.center) < cfg.proximity_radius {
            reward += cfg.stuck_penalty;
        }
    }

    let mut s = *status;
    if events.collision {
        reward += cfg.collision_penalty;
        s.collisions += 1;
    }
    if let Some(pass) = events.pass.filter(|p| p.gate_id == status.target_gate) {
        reward += cfg.pass_reward;
        s.gates_passed += 1;
        s.target_gate += 1;
        let k = s.target_gate - s.start_gate;
        s.gate_deadline = match (opponent_times.get(k), opponent_times.get(k - 1)) {
            (Some(next_t), Some(prev_t)) => pass.time + cfg.timer_multiplier * (next_t - prev_t),
            _ => f64::INFINITY,
        };
    }
    s.episode_return += reward;
    s.done = check_termination(next, &s, cfg, track);
    Ok((reward, s))
}

pub fn check_termination(state: &DroneState, status: &EpisodeStatus, cfg: &RewardConfig, track: &Track) -> Termination {
    if status.gates_passed >= track.len() {
        return Termination::AllGates;
    }
    if let Some(g) = track.gates.get(status.target_gate) {
        if state.position.distance(g.center) > cfg.max_divergence {
            return Termination::TooFar;
        }
    }
    if status.collisions >= cfg.collision_limit {
        return Termination::CollisionLimit;
    }
    if state.time > cfg.effective_time_limit(track) {
        return Termination::TimeLimit;
    }
    Termination::None
}
