//! Pure-pursuit competitor.
//!
//! The opponent flies a polyline through every gate center, each preceded
//! by an approach point on the gate's inbound normal so it always crosses
//! square to the opening. It moves at a constant cruise speed and carries
//! leftover travel across waypoints within a step, so its pace matches the
//! closed-form polyline timing used to budget gate timers.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Attitude, DroneState};
use crate::error::{Error, Result};
use crate::geometry::Track;
use crate::vec3::{wrap_angle, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpponentConfig {
    pub cruise_speed: f64,
    pub arrival_radius: f64,
    pub approach_offset: f64,
}

impl Default for OpponentConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 4.0,
            arrival_radius: 0.5,
            approach_offset: 1.0,
        }
    }
}

impl OpponentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cruise_speed > 0.0 && self.arrival_radius > 0.0 && self.approach_offset >= 0.0) {
            return Err(Error::Config(
                "opponent cruise_speed and arrival_radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    pub waypoints: Vec<Vec3>,
    /// Index into `waypoints` of each gate center, in gate order.
    pub gate_waypoints: Vec<usize>,
    pub cruise_speed: f64,
    pub arrival_radius: f64,
}

/// Plan through every gate of `track`.
pub fn plan(track: &Track, cfg: &OpponentConfig) -> Result<WaypointPlan> {
    plan_from(track, 0, cfg)
}

/// Plan through the gates of `track` starting at `first_gate`.
pub fn plan_from(track: &Track, first_gate: usize, cfg: &OpponentConfig) -> Result<WaypointPlan> {
    cfg.validate()?;
    if track.is_empty() {
        return Err(Error::InvalidArgument("cannot plan over an empty track".into()));
    }
    track.gate(first_gate)?;
    let mut waypoints = Vec::with_capacity(2 * track.len());
    let mut gate_waypoints = Vec::with_capacity(track.len());
    for gate in &track.gates[first_gate..] {
        waypoints.push(gate.center - gate.normal() * cfg.approach_offset);
        gate_waypoints.push(waypoints.len());
        waypoints.push(gate.center);
    }
    Ok(WaypointPlan {
        waypoints,
        gate_waypoints,
        cruise_speed: cfg.cruise_speed,
        arrival_radius: cfg.arrival_radius,
    })
}

/// Time at which a cruise-speed follower starting at `start` reaches each gate center.
pub fn expected_gate_times(plan: &WaypointPlan, start: Vec3) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(plan.waypoints.len());
    let mut dist = 0.0;
    let mut prev = start;
    for &w in &plan.waypoints {
        dist += prev.distance(w);
        cumulative.push(dist);
        prev = w;
    }
    plan.gate_waypoints
        .iter()
        .map(|&i| cumulative[i] / plan.cruise_speed)
        .collect()
}

/// Waypoint-following state for one opponent drone.
#[derive(Debug, Clone, PartialEq)]
pub struct Follower {
    pub plan: WaypointPlan,
    pub index: usize,
    pub state: DroneState,
}

impl Follower {
    pub fn new(plan: WaypointPlan, state: DroneState) -> Self {
        Self {
            plan,
            index: 0,
            state,
        }
    }

    pub fn finished(&self) -> bool {
        self.index >= self.plan.waypoints.len()
    }

    pub fn advance(&mut self, dt: f64) -> Result<DroneState> {
        let (index, state) = advance(&self.plan, self.index, &self.state, dt)?;
        self.index = index;
        self.state = state;
        Ok(state)
    }
}

/// One control step of pure pursuit. Returns the new waypoint index and state.
///
/// A waypoint is reached once it lies within this step's travel; arrival is
/// exact, so the follower never cuts inside `arrival_radius` of a corner.
pub fn advance(plan: &WaypointPlan, mut index: usize, state: &DroneState, dt: f64) -> Result<(usize, DroneState)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let wps = &plan.waypoints;
    let mut pos = state.position;
    let mut budget = plan.cruise_speed * dt;
    while budget > 0.0 && index < wps.len() {
        let to = wps[index] - pos;
        let d = to.norm();
        if d <= budget {
            pos = wps[index];
            budget -= d;
            index += 1;
        } else {
            pos += to * (budget / d);
            budget = 0.0;
        }
    }
    let velocity = (pos - state.position) / dt;
    let yaw = if velocity.norm_xy() > 1e-9 {
        velocity.y.atan2(velocity.x)
    } else {
        state.attitude.yaw
    };
    let next = DroneState {
        position: pos,
        velocity,
        attitude: Attitude {
            roll: 0.0,
            pitch: 0.0,
            yaw,
        },
        angular_velocity: Vec3::new(0.0, 0.0, wrap_angle(yaw - state.attitude.yaw) / dt),
        time: state.time + dt,
    };
    Ok((index, next))
}
