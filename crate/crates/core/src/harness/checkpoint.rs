//! Binary checkpoints for exact training resume.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic    8 bytes  "DRNRCKPT"
//! version  u32
//! sections repeated: tag [u8; 4], length u64, payload
//! checksum u64      FNV-1a over every preceding byte
//! ```
//!
//! Floats are stored as raw IEEE-754 bits. The run configuration travels as
//! a JSON section so checkpoints stay self-describing.

use std::path::Path;

use super::config::RunConfig;
use super::env::{EnvConfig, EnvRngs, RaceEnv, OBS_DIM};
use crate::dynamics::{Attitude, DroneState};
use crate::error::{Error, Result};
use crate::geometry::{Gate, Track};
use crate::opponent::{Follower, WaypointPlan};
use crate::policy::{Adam, ObsNormalizer, PolicyLayout, PolicyParams, RewardScaler, RunningMoments};
use crate::reward::{EpisodeStatus, Termination};
use crate::rng::RngState;
use crate::vec3::Vec3;

pub const MAGIC: &[u8; 8] = b"DRNRCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Complete trainer state at an update boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    /// The run's fixed track.
    pub track: Track,
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub obs_norm: ObsNormalizer,
    pub reward_scaler: RewardScaler,
    pub global_step: u64,
    pub episodes: u64,
    pub updates: u64,
    pub policy_rng: RngState,
    pub update_rng: RngState,
    /// In-flight environments, mid-episode state included.
    pub envs: Vec<RaceEnv>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

        let mut conf = Writer::default();
        conf.u64(self.seed);
        conf.bytes(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        section(&mut out, b"CONF", conf);

        let mut w = Writer::default();
        w.track(&self.track);
        section(&mut out, b"TRAK", w);

        let mut w = Writer::default();
        w.usizes(self.params.layout.actor.sizes());
        w.usizes(self.params.layout.critic.sizes());
        w.f64s(&self.params.data);
        section(&mut out, b"PARM", w);

        let mut w = Writer::default();
        let o = &self.optimizer;
        w.f64(o.beta1);
        w.f64(o.beta2);
        w.f64(o.eps);
        w.u64(o.step);
        w.f64s(&o.m);
        w.f64s(&o.v);
        section(&mut out, b"ADAM", w);

        let mut w = Writer::default();
        w.bool(self.obs_norm.frozen);
        w.moments(&self.obs_norm.moments);
        w.f64(self.reward_scaler.gamma);
        w.bool(self.reward_scaler.frozen);
        w.moments(&self.reward_scaler.moments);
        w.f64s(&self.reward_scaler.returns);
        section(&mut out, b"NORM", w);

        let mut w = Writer::default();
        w.u64(self.global_step);
        w.u64(self.episodes);
        w.u64(self.updates);
        w.rng(&self.policy_rng);
        w.rng(&self.update_rng);
        section(&mut out, b"CNTR", w);

        let mut w = Writer::default();
        w.u64(self.envs.len() as u64);
        for env in &self.envs {
            w.env(env);
        }
        section(&mut out, b"ENVS", w);

        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 {
            return Err(corrupt(format!("file is {} bytes, too short for a header", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic; not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        if bytes.len() < 20 {
            return Err(corrupt("truncated: missing checksum"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let mut sections = Vec::new();
        let mut r = Reader::new(&body[12..]);
        while !r.is_empty() {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let len = r.len_prefix()?;
            sections.push((tag, r.take(len)?));
        }
        if fnv1a(body) != u64::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let find = |tag: &[u8; 4]| {
            sections
                .iter()
                .find(|(t, _)| t == tag)
                .map(|(_, p)| Reader::new(p))
                .ok_or_else(|| corrupt(format!("missing section {}", String::from_utf8_lossy(tag))))
        };

        let mut r = find(b"CONF")?;
        let seed = r.u64()?;
        let config: RunConfig = serde_json::from_slice(r.bytes()?)
            .map_err(|e| corrupt(format!("embedded run config: {e}")))?;
        r.finish("CONF")?;

        let mut r = find(b"TRAK")?;
        let track = r.track()?;
        r.finish("TRAK")?;

        let mut r = find(b"PARM")?;
        let actor = r.usizes()?;
        let critic = r.usizes()?;
        let data = r.f64s()?;
        r.finish("PARM")?;
        let layout = layout_from(&actor, &critic)?;
        if data.len() != layout.num_params() {
            return Err(corrupt(format!(
                "parameter count {} does not match layout ({})",
                data.len(),
                layout.num_params()
            )));
        }
        let params = PolicyParams { layout, data };

        let mut r = find(b"ADAM")?;
        let optimizer = Adam {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            step: r.u64()?,
            m: r.f64s()?,
            v: r.f64s()?,
        };
        r.finish("ADAM")?;
        if optimizer.m.len() != params.data.len() || optimizer.v.len() != params.data.len() {
            return Err(corrupt("optimizer moments do not match the parameter count"));
        }

        let mut r = find(b"NORM")?;
        let obs_norm = ObsNormalizer {
            frozen: r.bool()?,
            moments: r.moments()?,
        };
        let reward_scaler = RewardScaler {
            gamma: r.f64()?,
            frozen: r.bool()?,
            moments: r.moments()?,
            returns: r.f64s()?,
        };
        r.finish("NORM")?;

        let mut r = find(b"CNTR")?;
        let global_step = r.u64()?;
        let episodes = r.u64()?;
        let updates = r.u64()?;
        let policy_rng = r.rng()?;
        let update_rng = r.rng()?;
        r.finish("CNTR")?;

        let env_cfg = EnvConfig::from_run(&config);
        let mut r = find(b"ENVS")?;
        let n = r.len_prefix()?;
        let mut envs = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            envs.push(r.env(&env_cfg)?);
        }
        r.finish("ENVS")?;

        Ok(Self {
            config,
            seed,
            track,
            params,
            optimizer,
            obs_norm,
            reward_scaler,
            global_step,
            episodes,
            updates,
            policy_rng,
            update_rng,
            envs,
        })
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn layout_from(actor: &[usize], critic: &[usize]) -> Result<PolicyLayout> {
    let ok = actor.len() >= 2
        && actor.len() == critic.len()
        && actor.iter().chain(critic).all(|&s| s > 0 && s < 1 << 20)
        && actor[..actor.len() - 1] == critic[..critic.len() - 1]
        && critic.last() == Some(&1);
    if !ok {
        return Err(corrupt(format!("invalid network shapes {actor:?} / {critic:?}")));
    }
    let hidden = &actor[1..actor.len() - 1];
    Ok(PolicyLayout::new(actor[0], hidden, *actor.last().unwrap()))
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], w: Writer) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(w.0.len() as u64).to_le_bytes());
    out.extend_from_slice(&w.0);
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn bool(&mut self, v: bool) {
        self.0.push(v as u8);
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    fn usizes(&mut self, v: &[usize]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u64(x as u64);
        }
    }

    fn opt_u64(&mut self, v: Option<u64>) {
        self.bool(v.is_some());
        self.u64(v.unwrap_or(0));
    }

    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }

    fn vec3s(&mut self, v: &[Vec3]) {
        self.u64(v.len() as u64);
        for &p in v {
            self.vec3(p);
        }
    }

    fn state(&mut self, s: &DroneState) {
        self.vec3(s.position);
        self.vec3(s.velocity);
        self.f64(s.attitude.roll);
        self.f64(s.attitude.pitch);
        self.f64(s.attitude.yaw);
        self.vec3(s.angular_velocity);
        self.f64(s.time);
    }

    fn moments(&mut self, m: &RunningMoments) {
        self.u64(m.count);
        self.f64s(&m.mean);
        self.f64s(&m.m2);
    }

    fn rng(&mut self, s: &RngState) {
        self.0.extend_from_slice(&s.to_bytes());
    }

    fn track(&mut self, t: &Track) {
        self.f64(t.spawn_band[0]);
        self.f64(t.spawn_band[1]);
        self.f64(t.time_limit);
        self.u64(t.gates.len() as u64);
        for g in &t.gates {
            self.u64(g.id as u64);
            self.vec3(g.center);
            self.f64(g.yaw);
            self.f64(g.half_width);
            self.f64(g.half_height);
            self.f64(g.frame_thickness);
        }
    }

    fn env(&mut self, e: &RaceEnv) {
        self.track(&e.track);
        self.state(&e.agent);
        let plan = &e.opponent.plan;
        self.vec3s(&plan.waypoints);
        self.usizes(&plan.gate_waypoints);
        self.f64(plan.cruise_speed);
        self.f64(plan.arrival_radius);
        self.u64(e.opponent.index as u64);
        self.state(&e.opponent.state);
        self.f64s(&e.opponent_times);
        let s = &e.status;
        self.u64(s.start_gate as u64);
        self.u64(s.target_gate as u64);
        self.f64(s.gate_deadline);
        self.u64(s.collisions as u64);
        self.u64(s.gates_passed as u64);
        self.0.push(s.done.code());
        self.f64(s.episode_return);
        self.u64(e.opponent_gates as u64);
        self.opt_u64(e.opponent_finish);
        self.opt_u64(e.agent_finish);
        self.u64(e.steps);
        self.rng(&RngState::capture(&e.rngs.spawn));
        self.rng(&RngState::capture(&e.rngs.sensors));
        self.rng(&RngState::capture(&e.rngs.track));
        self.f64s(e.observation());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn finish(&self, name: &str) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(corrupt(format!("{} trailing bytes in section {name}", self.buf.len() - self.pos)))
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    /// A length that must fit in the remaining bytes.
    fn len_prefix(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(corrupt(format!("truncated: length {n} exceeds remaining data")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("invalid flag byte {b}"))),
        }
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len_prefix()?;
        self.take(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len_prefix()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("index overflows usize"))
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len_prefix()?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn opt_u64(&mut self) -> Result<Option<u64>> {
        let some = self.bool()?;
        let v = self.u64()?;
        Ok(some.then_some(v))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn vec3s(&mut self) -> Result<Vec<Vec3>> {
        let n = self.len_prefix()?;
        (0..n).map(|_| self.vec3()).collect()
    }

    fn state(&mut self) -> Result<DroneState> {
        Ok(DroneState {
            position: self.vec3()?,
            velocity: self.vec3()?,
            attitude: Attitude {
                roll: self.f64()?,
                pitch: self.f64()?,
                yaw: self.f64()?,
            },
            angular_velocity: self.vec3()?,
            time: self.f64()?,
        })
    }

    fn moments(&mut self) -> Result<RunningMoments> {
        let count = self.u64()?;
        let mean = self.f64s()?;
        let m2 = self.f64s()?;
        if mean.len() != m2.len() {
            return Err(corrupt("running moments of unequal length"));
        }
        Ok(RunningMoments { count, mean, m2 })
    }

    fn rng(&mut self) -> Result<RngState> {
        Ok(RngState::from_bytes(self.take(RngState::ENCODED_LEN)?.try_into().unwrap()))
    }

    fn track(&mut self) -> Result<Track> {
        let spawn_band = [self.f64()?, self.f64()?];
        let time_limit = self.f64()?;
        let n = self.len_prefix()?;
        let mut gates = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            gates.push(Gate {
                id: self.usize()?,
                center: self.vec3()?,
                yaw: self.f64()?,
                half_width: self.f64()?,
                half_height: self.f64()?,
                frame_thickness: self.f64()?,
            });
        }
        let track = Track {
            spawn_band,
            time_limit,
            gates,
        };
        track.validate().map_err(|e| corrupt(format!("embedded track: {e}")))?;
        Ok(track)
    }

    fn env(&mut self, cfg: &EnvConfig) -> Result<RaceEnv> {
        let track = self.track()?;
        let agent = self.state()?;
        let plan = WaypointPlan {
            waypoints: self.vec3s()?,
            gate_waypoints: self.usizes()?,
            cruise_speed: self.f64()?,
            arrival_radius: self.f64()?,
        };
        let index = self.usize()?;
        let opp_state = self.state()?;
        let opponent_times = self.f64s()?;
        let status = EpisodeStatus {
            start_gate: self.usize()?,
            target_gate: self.usize()?,
            gate_deadline: self.f64()?,
            collisions: u32::try_from(self.u64()?).map_err(|_| corrupt("collision count overflow"))?,
            gates_passed: self.usize()?,
            done: Termination::from_code(self.u8()?).ok_or_else(|| corrupt("unknown termination code"))?,
            episode_return: self.f64()?,
        };
        let opponent_gates = self.usize()?;
        let opponent_finish = self.opt_u64()?;
        let agent_finish = self.opt_u64()?;
        let steps = self.u64()?;
        let rngs = EnvRngs {
            spawn: self.rng()?.restore(),
            sensors: self.rng()?.restore(),
            track: self.rng()?.restore(),
        };
        let obs: [f64; OBS_DIM] = self
            .f64s()?
            .try_into()
            .map_err(|v: Vec<f64>| corrupt(format!("observation of length {}", v.len())))?;
        if plan.gate_waypoints.iter().any(|&i| i >= plan.waypoints.len())
            || index > plan.waypoints.len()
            || status.target_gate > track.len()
        {
            return Err(corrupt("environment indices out of range"));
        }
        let opponent = Follower {
            plan,
            index,
            state: opp_state,
        };
        Ok(RaceEnv::from_parts(
            cfg.clone(),
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
        ))
    }
}
