//! Run configuration: one TOML document with a block per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};
use crate::geometry::{generate_track, Track, TrackGenConfig, DEFAULT_DRONE_RADIUS};
use crate::opponent::OpponentConfig;
use crate::policy::TrainConfig;
use crate::reward::RewardConfig;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub generator: TrackGenConfig,
    /// Seed for the fixed track; the run's master seed when absent.
    pub seed: Option<u64>,
    /// Load the track from this file instead of generating it.
    pub file: Option<PathBuf>,
    /// Generate a fresh track for every episode.
    pub randomize_per_episode: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            generator: TrackGenConfig::default(),
            seed: None,
            file: None,
            randomize_per_episode: false,
        }
    }
}

/// Frame in which the policy's velocity-delta action is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionFrame {
    World,
    /// Rotated by the drone's current yaw, like the target features.
    Yaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub n_envs: usize,
    /// Write a numbered checkpoint every this many updates; 0 writes only at exit.
    pub checkpoint_interval: u64,
    pub drone_radius: f64,
    /// Spawn in front of a uniformly chosen gate instead of the first.
    pub random_spawn_gate: bool,
    /// Seconds of gate timer that map to a unit observation.
    pub timer_scale: f64,
    /// Uniform spawn yaw perturbation, degrees either side.
    pub spawn_yaw_jitter_deg: f64,
    pub action_frame: ActionFrame,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            n_envs: 1,
            checkpoint_interval: 50,
            drone_radius: DEFAULT_DRONE_RADIUS,
            random_spawn_gate: false,
            timer_scale: 10.0,
            spawn_yaw_jitter_deg: 0.0,
            action_frame: ActionFrame::Yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dynamics: DynamicsConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub opponent: OpponentConfig,
    pub track: TrackConfig,
    pub harness: HarnessConfig,
}

impl RunConfig {
    /// The three-gate desk-scale course: training defaults on a 500k-step budget,
    /// episodes starting in front of a random gate with up to 45 degrees of yaw error.
    pub fn mini() -> Self {
        Self {
            train: TrainConfig {
                total_steps: 500_000,
                ..TrainConfig::default()
            },
            track: TrackConfig {
                generator: TrackGenConfig::mini(),
                ..TrackConfig::default()
            },
            harness: HarnessConfig {
                spawn_yaw_jitter_deg: 45.0,
                random_spawn_gate: true,
                ..HarnessConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.reward.validate()?;
        self.train.validate()?;
        self.opponent.validate()?;
        self.track.generator.validate()?;
        let h = &self.harness;
        if h.n_envs == 0 || self.train.rollout_steps % h.n_envs != 0 {
            return Err(Error::Config(format!(
                "n_envs = {} must be positive and divide rollout_steps = {}",
                h.n_envs, self.train.rollout_steps
            )));
        }
        if !(h.drone_radius >= 0.0 && h.timer_scale > 0.0 && h.spawn_yaw_jitter_deg >= 0.0) {
            return Err(Error::Config(
                "drone_radius and spawn_yaw_jitter_deg must be non-negative, timer_scale positive".into(),
            ));
        }
        Ok(())
    }

    /// The fixed track for a run with `master_seed`.
    pub fn resolve_track(&self, master_seed: u64) -> Result<Track> {
        match &self.track.file {
            Some(path) => Track::load(path),
            None => {
                let seed = self.track.seed.unwrap_or(master_seed);
                generate_track(&self.track.generator, &mut stream(seed, Stream::Track, 0))
            }
        }
    }
}
