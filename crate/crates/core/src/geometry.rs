//! Gate and track geometry.
//!
//! A gate is an upright rectangular aperture surrounded by a solid frame
//! band. Its local frame is `(n, u, v)`: `n` is the horizontal normal given by
//! the gate yaw (the direction a drone must fly to pass), `u` is the
//! horizontal in-plane axis and `v` is world up.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dynamics::DroneState;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vec3::{wrap_angle, Vec3};

pub const DEFAULT_HALF_EXTENT: f64 = 1.5;
pub const DEFAULT_FRAME_THICKNESS: f64 = 0.25;
pub const DEFAULT_DRONE_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub id: usize,
    pub center: Vec3,
    pub yaw: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub frame_thickness: f64,
}

/// Coordinates of a point in a gate's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateLocal {
    /// Signed distance along the normal; negative on the approach side.
    pub n: f64,
    pub u: f64,
    pub v: f64,
}

impl Gate {
    pub fn new(id: usize, center: Vec3, yaw: f64) -> Self {
        Self {
            id,
            center,
            yaw,
            half_width: DEFAULT_HALF_EXTENT,
            half_height: DEFAULT_HALF_EXTENT,
            frame_thickness: DEFAULT_FRAME_THICKNESS,
        }
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    pub fn lateral(&self) -> Vec3 {
        Vec3::new(-self.yaw.sin(), self.yaw.cos(), 0.0)
    }

    pub fn to_local(&self, p: Vec3) -> GateLocal {
        let d = p - self.center;
        GateLocal {
            n: d.dot(self.normal()),
            u: d.dot(self.lateral()),
            v: d.z,
        }
    }

    pub fn from_local(&self, l: GateLocal) -> Vec3 {
        self.center + self.normal() * l.n + self.lateral() * l.u + Vec3::new(0.0, 0.0, l.v)
    }

    pub fn in_opening(&self, u: f64, v: f64) -> bool {
        u.abs() <= self.half_width && v.abs() <= self.half_height
    }

    /// In-plane offsets inside the outer frame rectangle but outside the opening.
    pub fn in_frame_band(&self, u: f64, v: f64) -> bool {
        u.abs() <= self.half_width + self.frame_thickness
            && v.abs() <= self.half_height + self.frame_thickness
            && !self.in_opening(u, v)
    }

    /// Distance from `p` to the (closed) opening rectangle.
    pub fn distance_to_opening(&self, p: Vec3) -> f64 {
        let l = self.to_local(p);
        let du = (l.u.abs() - self.half_width).max(0.0);
        let dv = (l.v.abs() - self.half_height).max(0.0);
        (l.n * l.n + du * du + dv * dv).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.half_width > 0.0
            && self.half_height > 0.0
            && self.frame_thickness > 0.0
            && self.center.is_finite()
            && self.yaw.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("gate {} has invalid geometry", self.id)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassEvent {
    pub gate_id: usize,
    pub time: f64,
    pub crossing_point: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    pub spawn_band: [f64; 2],
    pub time_limit: f64,
    pub gates: Vec<Gate>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, index: usize) -> Result<&Gate> {
        self.gates.get(index).ok_or(Error::GateIndex {
            index,
            count: self.gates.len(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            if g.id != i {
                return Err(Error::Config(format!("gate at position {i} has id {}", g.id)));
            }
            g.validate()?;
        }
        let [lo, hi] = self.spawn_band;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("invalid spawn band [{lo}, {hi}]")));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::Config("track time_limit must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("track serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let track: Track = toml::from_str(text).map_err(|e| Error::Config(format!("track: {e}")))?;
        track.validate()?;
        Ok(track)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Parameters for procedural track generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackGenConfig {
    pub n_gates: usize,
    pub min_spacing: f64,
    pub max_spacing: f64,
    /// Maximum heading change between consecutive legs, degrees.
    pub max_turn_deg: f64,
    /// Maximum climb or descent per leg, meters.
    pub max_climb: f64,
    pub altitude: [f64; 2],
    pub spawn_band: [f64; 2],
    pub time_limit: f64,
}

impl Default for TrackGenConfig {
    fn default() -> Self {
        Self {
            n_gates: 10,
            min_spacing: 10.0,
            max_spacing: 15.0,
            max_turn_deg: 45.0,
            max_climb: 1.0,
            altitude: [1.5, 5.0],
            spawn_band: [2.0, 3.5],
            time_limit: 120.0,
        }
    }
}

impl TrackGenConfig {
    /// Three gates 10-12 m apart, the desk-scale training course.
    pub fn mini() -> Self {
        Self {
            n_gates: 3,
            min_spacing: 10.0,
            max_spacing: 12.0,
            time_limit: 30.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gates == 0 {
            return Err(Error::Config("track needs at least one gate".into()));
        }
        if !(self.min_spacing > self.max_climb && self.max_spacing >= self.min_spacing) {
            return Err(Error::Config("track spacing must exceed max_climb and be ordered".into()));
        }
        if !(self.altitude[1] - self.altitude[0] > 2.0 * self.max_climb) {
            return Err(Error::Config("track altitude band too narrow for max_climb".into()));
        }
        Ok(())
    }
}

/// Cumulative heading is kept within this bound so the course never doubles back.
const MAX_ABS_HEADING: f64 = std::f64::consts::FRAC_PI_2;

pub fn generate_track(cfg: &TrackGenConfig, rng: &mut Rng) -> Result<Track> {
    cfg.validate()?;
    let max_turn = cfg.max_turn_deg.to_radians();
    let mut centers = Vec::with_capacity(cfg.n_gates);
    let mut legs = Vec::with_capacity(cfg.n_gates.saturating_sub(1));
    let mut center = Vec3::new(0.0, 0.0, 0.5 * (cfg.altitude[0] + cfg.altitude[1]));
    let mut heading = 0.0f64;
    centers.push(center);
    for k in 1..cfg.n_gates {
        if k > 1 {
            let mut turn = rng.random_range(-max_turn..=max_turn);
            if (heading + turn).abs() > MAX_ABS_HEADING {
                turn = -turn;
            }
            heading += turn;
        }
        let dist = rng.random_range(cfg.min_spacing..=cfg.max_spacing);
        let mut climb = rng.random_range(-cfg.max_climb..=cfg.max_climb);
        if !(cfg.altitude[0]..=cfg.altitude[1]).contains(&(center.z + climb)) {
            climb = -climb;
        }
        let horizontal = (dist * dist - climb * climb).sqrt();
        center += Vec3::new(heading.cos() * horizontal, heading.sin() * horizontal, climb);
        centers.push(center);
        legs.push(heading);
    }

    let gates = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let yaw = match (i.checked_sub(1).and_then(|j| legs.get(j)), legs.get(i)) {
                (Some(&inbound), Some(&outbound)) => inbound + 0.5 * wrap_angle(outbound - inbound),
                (Some(&inbound), None) => inbound,
                (None, Some(&outbound)) => outbound,
                (None, None) => 0.0,
            };
            Gate::new(i, c, wrap_angle(yaw))
        })
        .collect();

    let track = Track {
        spawn_band: cfg.spawn_band,
        time_limit: cfg.time_limit,
        gates,
    };
    track.validate()?;
    Ok(track)
}

/// The standard ten-gate course for `seed`.
pub fn default_track(seed: u64) -> Track {
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Track, 0);
    generate_track(&TrackGenConfig::default(), &mut rng).expect("default track config is valid")
}

/// The three-gate desk-scale course for `seed`.
pub fn mini_track(seed: u64) -> Track {
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Track, 0);
    generate_track(&TrackGenConfig::mini(), &mut rng).expect("mini track config is valid")
}

/// Crossing point of the directed segment `p0 -> p1` through the gate opening.
///
/// The segment must go from the approach side (`n < 0`) to the plane or
/// beyond (`n >= 0`); re-entry from behind never counts.
pub fn segment_gate_crossing(p0: Vec3, p1: Vec3, gate: &Gate) -> Option<Vec3> {
    let normal = gate.normal();
    let s0 = (p0 - gate.center).dot(normal);
    let s1 = (p1 - gate.center).dot(normal);
    if !(s0 < 0.0 && s1 >= 0.0) {
        return None;
    }
    let t = s0 / (s0 - s1);
    let x = p0.lerp(p1, t);
    let l = gate.to_local(x);
    gate.in_opening(l.u, l.v).then_some(x)
}

/// Parameter interval of `w0 + dw * t` where `|w| <= limit`, intersected with `[lo, hi]`.
fn clip_axis(w0: f64, dw: f64, limit: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (a, b) = if dw == 0.0 {
        if w0.abs() <= limit {
            (lo, hi)
        } else {
            return None;
        }
    } else {
        let ta = (-limit - w0) / dw;
        let tb = (limit - w0) / dw;
        (ta.min(tb).max(lo), ta.max(tb).min(hi))
    };
    (a <= b).then_some((a, b))
}

/// Whether a drone of `drone_radius` moving along `p0 -> p1` touches the frame band.
pub fn segment_frame_collision(p0: Vec3, p1: Vec3, gate: &Gate, drone_radius: f64) -> bool {
    let l0 = gate.to_local(p0);
    let l1 = gate.to_local(p1);
    let half_slab = 0.5 * gate.frame_thickness + drone_radius;
    let outer_u = gate.half_width + gate.frame_thickness;
    let outer_v = gate.half_height + gate.frame_thickness;

    let Some((a, b)) = clip_axis(l0.n, l1.n - l0.n, half_slab, 0.0, 1.0) else {
        return false;
    };
    let Some((a, b)) = clip_axis(l0.u, l1.u - l0.u, outer_u, a, b) else {
        return false;
    };
    let Some((a, b)) = clip_axis(l0.v, l1.v - l0.v, outer_v, a, b) else {
        return false;
    };
    // the clipped piece is inside the outer rectangle; the opening is convex
    let at = |t: f64| (l0.u + (l1.u - l0.u) * t, l0.v + (l1.v - l0.v) * t);
    let (ua, va) = at(a);
    let (ub, vb) = at(b);
    !(gate.in_opening(ua, va) && gate.in_opening(ub, vb))
}

/// Optional overrides for spawn sampling.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpawnOverride {
    /// Fixed distance to the gate center instead of sampling the band.
    pub distance: Option<f64>,
    /// Magnitude of a yaw error added with random sign, radians.
    pub yaw_error: f64,
}

/// Rest state in front of `target_gate`, at a distance drawn from the spawn band.
pub fn sample_spawn(track: &Track, target_gate: usize, rng: &mut Rng) -> Result<DroneState> {
    sample_spawn_with(track, target_gate, SpawnOverride::default(), rng)
}

pub fn sample_spawn_with(
    track: &Track,
    target_gate: usize,
    over: SpawnOverride,
    rng: &mut Rng,
) -> Result<DroneState> {
    let gate = track.gate(target_gate)?;
    let [lo, hi] = track.spawn_band;
    let dist = rng.random_range(lo..=hi);
    let dist = over.distance.unwrap_or(dist);
    let u = rng.random_range(-0.5..=0.5) * gate.half_width;
    let v = rng.random_range(-0.5..=0.5) * gate.half_height;
    // keep the Euclidean distance to the center equal to `dist`
    let along = (dist * dist - u * u - v * v).max(0.0).sqrt();
    let position = gate.from_local(GateLocal { n: -along, u, v });
    let to_gate = gate.center - position;
    let mut yaw = to_gate.y.atan2(to_gate.x);
    if over.yaw_error != 0.0 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        yaw += sign * over.yaw_error;
    }
    Ok(DroneState::at_rest(position, yaw, 0.0))
}
