//! The training driver: rollout collection, PPO updates, metrics and checkpoints.

use std::path::{Path, PathBuf};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::env::{EnvConfig, EnvRngs, RaceEnv, ACT_DIM, OBS_DIM};
use super::metrics::{EpisodeInfo, MetricsLog, MetricsRecord};
use super::telemetry::TelemetryServer;
use crate::error::{Error, Result};
use crate::geometry::Track;
use crate::policy::{
    ppo_update, sample_action, Adam, ObsNormalizer, PolicyLayout, PolicyParams, RewardScaler, RolloutBuffer,
    Transition, UpdateStats,
};
use crate::rng::{stream, Rng, RngState, Stream};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub struct Trainer {
    pub config: RunConfig,
    pub seed: u64,
    pub track: Track,
    pub envs: Vec<RaceEnv>,
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub obs_norm: ObsNormalizer,
    pub reward_scaler: RewardScaler,
    pub policy_rng: Rng,
    pub update_rng: Rng,
    pub global_step: u64,
    pub episodes: u64,
    pub updates: u64,
    pub buffer: RolloutBuffer,
}

impl Trainer {
    pub fn new(config: RunConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let track = config.resolve_track(seed)?;
        Self::with_track(config, seed, track)
    }

    /// Start training on an explicit fixed track.
    pub fn with_track(config: RunConfig, seed: u64, track: Track) -> Result<Self> {
        config.validate()?;
        let env_cfg = EnvConfig::from_run(&config);
        let n = config.harness.n_envs;
        let envs = (0..n)
            .map(|i| {
                let rngs = EnvRngs {
                    spawn: stream(seed, Stream::Spawn, i as u64),
                    sensors: stream(seed, Stream::Sensors, i as u64),
                    track: stream(seed, Stream::Track, 1 + i as u64),
                };
                RaceEnv::new(env_cfg.clone(), track.clone(), rngs)
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = PolicyLayout::new(OBS_DIM, &config.train.hidden, ACT_DIM);
        let params = PolicyParams::init(layout, &mut stream(seed, Stream::Init, 0));
        let buffer = RolloutBuffer::new(config.train.rollout_steps, OBS_DIM, ACT_DIM);
        Ok(Self {
            optimizer: Adam::new(params.data.len()),
            params,
            obs_norm: ObsNormalizer::new(OBS_DIM),
            reward_scaler: RewardScaler::new(config.train.gamma, n),
            policy_rng: stream(seed, Stream::Policy, 0),
            update_rng: stream(seed, Stream::Update, 0),
            global_step: 0,
            episodes: 0,
            updates: 0,
            buffer,
            envs,
            track,
            seed,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let n = ckpt.config.harness.n_envs;
        if ckpt.envs.len() != n || ckpt.reward_scaler.returns.len() != n {
            return Err(Error::CorruptCheckpoint(format!(
                "checkpoint holds {} environments, config expects {n}",
                ckpt.envs.len()
            )));
        }
        if ckpt.params.layout != PolicyLayout::new(OBS_DIM, &ckpt.config.train.hidden, ACT_DIM) {
            return Err(Error::CorruptCheckpoint("network shape does not match the embedded config".into()));
        }
        let buffer = RolloutBuffer::new(ckpt.config.train.rollout_steps, OBS_DIM, ACT_DIM);
        Ok(Self {
            config: ckpt.config,
            seed: ckpt.seed,
            track: ckpt.track,
            envs: ckpt.envs,
            params: ckpt.params,
            optimizer: ckpt.optimizer,
            obs_norm: ckpt.obs_norm,
            reward_scaler: ckpt.reward_scaler,
            policy_rng: ckpt.policy_rng.restore(),
            update_rng: ckpt.update_rng.restore(),
            global_step: ckpt.global_step,
            episodes: ckpt.episodes,
            updates: ckpt.updates,
            buffer,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            seed: self.seed,
            track: self.track.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            obs_norm: self.obs_norm.clone(),
            reward_scaler: self.reward_scaler.clone(),
            global_step: self.global_step,
            episodes: self.episodes,
            updates: self.updates,
            policy_rng: RngState::capture(&self.policy_rng),
            update_rng: RngState::capture(&self.update_rng),
            envs: self.envs.clone(),
        }
    }

    /// Fill the rollout buffer, auto-resetting finished episodes.
    ///
    /// Environments advance in lockstep; transitions are stored env-major.
    pub fn collect_rollout(&mut self) -> Result<Vec<EpisodeInfo>> {
        let n_envs = self.envs.len();
        let seg = self.buffer.capacity() / n_envs;
        self.buffer.clear();
        let mut finished = Vec::new();
        for t in 0..seg {
            for (e, env) in self.envs.iter_mut().enumerate() {
                let obs = self.obs_norm.normalize(env.observation());
                let out = self.params.forward(&obs)?;
                let action = sample_action(&out.mean, &out.log_std, &mut self.policy_rng);
                let outcome = env.step(&action.clipped)?;
                let done = outcome.done();
                let reward = self.reward_scaler.scale(e, outcome.reward, done);
                self.buffer.set(
                    e * seg + t,
                    Transition {
                        observation: &obs,
                        action: &action.raw,
                        log_prob: action.log_prob,
                        reward,
                        value: out.value,
                        done,
                    },
                )?;
                self.global_step += 1;
                if done {
                    finished.push(EpisodeInfo {
                        index: self.episodes,
                        env: e,
                        global_step: self.global_step,
                        episodic_return: env.status.episode_return,
                        gates_passed: env.status.gates_passed - env.status.start_gate,
                        collisions: env.status.collisions,
                        duration: env.agent.time,
                        termination: outcome.termination,
                    });
                    self.episodes += 1;
                    env.reset()?;
                }
            }
        }
        self.buffer.set_len(self.buffer.capacity());
        Ok(finished)
    }

    /// Advantages for the filled buffer, then one PPO update.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let bootstraps = self
            .envs
            .iter()
            .map(|env| self.params.value(&self.obs_norm.apply(env.observation())))
            .collect::<Result<Vec<_>>>()?;
        let cfg = &self.config.train;
        self.buffer.compute_gae_segments(&bootstraps, cfg.gamma, cfg.gae_lambda)?;
        let lr = cfg.learning_rate_at(self.global_step);
        let stats = ppo_update(&mut self.params, &mut self.optimizer, &self.buffer, cfg, lr, &mut self.update_rng)?;
        self.updates += 1;
        Ok(stats)
    }

    /// One rollout plus update, reporting every record to `sink` in order.
    pub fn iterate(&mut self, sink: &mut dyn FnMut(&MetricsRecord) -> Result<()>) -> Result<UpdateStats> {
        for info in self.collect_rollout()? {
            sink(&MetricsRecord::episode(&info))?;
        }
        let stats = self.update()?;
        sink(&MetricsRecord::update(self.global_step, self.episodes, self.updates, &stats))?;
        Ok(stats)
    }

    pub fn is_finished(&self) -> bool {
        self.global_step >= self.config.train.total_steps
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub resume: Option<PathBuf>,
    /// Stream metrics to TCP clients at this address.
    pub metrics_addr: Option<String>,
    /// Stop (and checkpoint) once this many global steps are done.
    pub stop_after: Option<u64>,
    /// Override the step budget, including for resumed runs.
    pub total_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub global_step: u64,
    pub episodes: u64,
    pub updates: u64,
    pub final_checkpoint: PathBuf,
    pub records_written: u64,
}

/// Train into `out_dir`, appending to its metrics log.
pub fn train(config: RunConfig, seed: u64, out_dir: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    let mut trainer = match &opts.resume {
        Some(path) => Trainer::from_checkpoint(Checkpoint::load(path)?)?,
        None => Trainer::new(config, seed)?,
    };
    if let Some(total) = opts.total_steps {
        trainer.config.train.total_steps = total;
    }
    let server = opts.metrics_addr.as_deref().map(TelemetryServer::bind).transpose()?;
    run(&mut trainer, out_dir, server, opts.stop_after)
}

/// Drive `trainer` to completion (or `stop_after` steps), writing into `out_dir`.
pub fn run(
    trainer: &mut Trainer,
    out_dir: &Path,
    telemetry: Option<TelemetryServer>,
    stop_after: Option<u64>,
) -> Result<TrainSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut log = MetricsLog::open(&out_dir.join(METRICS_FILE))?;
    if let Some(t) = telemetry {
        log = log.with_telemetry(t);
    }
    let interval = trainer.config.harness.checkpoint_interval;
    let stop = stop_after.unwrap_or(u64::MAX);
    let result: Result<()> = (|| {
        while !trainer.is_finished() && trainer.global_step < stop {
            trainer.iterate(&mut |rec| log.write(rec))?;
            if interval > 0 && trainer.updates % interval == 0 {
                let path = out_dir.join(format!("update-{:06}.ckpt", trainer.updates));
                trainer.checkpoint().save(&path)?;
            }
        }
        Ok(())
    })();
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT);
    let saved = trainer.checkpoint().save(&final_checkpoint);
    if let Some(t) = log.take_telemetry() {
        t.shutdown();
    }
    result?;
    saved?;
    Ok(TrainSummary {
        global_step: trainer.global_step,
        episodes: trainer.episodes,
        updates: trainer.updates,
        final_checkpoint,
        records_written: log.written(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ppo::batch_log_probs;
    use ndarray::ArrayView2;

    fn small(total: u64) -> RunConfig {
        let mut cfg = RunConfig::mini();
        cfg.train.rollout_steps = 256;
        cfg.train.minibatch_size = 64;
        cfg.train.epochs_per_update = 2;
        cfg.train.hidden = vec![16, 16, 16];
        cfg.train.total_steps = total;
        cfg
    }

    #[test]
    fn rollout_fills_buffer_and_returns_match_rewards() {
        let mut t = Trainer::new(small(256), 1).unwrap();
        let mut replay = RaceEnv::clone(&t.envs[0]);
        let mut prng = t.policy_rng.clone();
        let mut norm = t.obs_norm.clone();
        let params = t.params.clone();
        let infos = t.collect_rollout().unwrap();
        assert_eq!(t.buffer.len(), 256);

        // replay the same actions to recover raw per-step rewards
        let mut sums = vec![];
        let mut acc = 0.0;
        for _ in 0..256 {
            let obs = norm.normalize(replay.observation());
            let out = params.forward(&obs).unwrap();
            let a = sample_action(&out.mean, &out.log_std, &mut prng);
            let o = replay.step(&a.clipped).unwrap();
            acc += o.reward;
            if o.done() {
                sums.push(acc);
                acc = 0.0;
                replay.reset().unwrap();
            }
        }
        assert_eq!(sums.len(), infos.len());
        for (s, info) in sums.iter().zip(&infos) {
            assert!((s - info.episodic_return).abs() < 1e-9);
        }
    }

    #[test]
    fn stored_log_probs_match_recomputation() {
        let mut t = Trainer::new(small(256), 2).unwrap();
        t.collect_rollout().unwrap();
        let b = &t.buffer;
        let obs = ArrayView2::from_shape((b.len(), OBS_DIM), &b.observations).unwrap();
        let act = ArrayView2::from_shape((b.len(), ACT_DIM), &b.actions).unwrap();
        let lp = batch_log_probs(&t.params, obs, act);
        for (a, s) in lp.iter().zip(&b.log_probs) {
            assert!((a - s).abs() < 1e-12);
        }
    }

    #[test]
    fn update_count_follows_budget() {
        let dir = tempfile::tempdir().unwrap();
        let s = train(small(512), 3, dir.path(), &TrainOptions::default()).unwrap();
        assert_eq!(s.updates, 2);
        assert_eq!(s.global_step, 512);
        assert!(s.final_checkpoint.exists());
        let lines = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap().lines().count() as u64;
        assert_eq!(lines, s.records_written);
        assert!(lines >= s.episodes);
    }

    #[test]
    fn multi_env_rollouts_are_deterministic() {
        let mut cfg = small(512);
        cfg.harness.n_envs = 4;
        let run = || {
            let mut t = Trainer::new(cfg.clone(), 5).unwrap();
            let mut recs = vec![];
            while !t.is_finished() {
                t.iterate(&mut |r| {
                    recs.push(r.to_line());
                    Ok(())
                })
                .unwrap();
            }
            (recs, t.params.data)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn unwritable_output_fails_at_startup() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("blocker");
        std::fs::write(&file, b"").unwrap();
        let err = train(small(256), 1, &file.join("sub"), &TrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
