//! Environment composition and the training, evaluation and race loops,
//! with checkpointing, metrics logging and TCP telemetry.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod evaluate;
pub mod metrics;
pub mod telemetry;
pub mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::{ActionFrame, HarnessConfig, RunConfig, TrackConfig};
pub use env::{build_observation, EnvConfig, EnvRngs, Observation, RaceEnv, Sensors, StepOutcome, ACT_DIM, OBS_DIM};
pub use evaluate::{
    evaluate, evaluate_pilot, race, race_pilot, ClonePilot, EvalOptions, EvalSummary, Pilot, PilotAction, PolicyPilot,
    RaceOutcome, RaceSummary,
};
pub use metrics::{read_metrics, EpisodeInfo, MetricsLog, MetricsRecord, RecordKind};
pub use telemetry::TelemetryServer;
pub use train::{run, train, TrainOptions, TrainSummary, Trainer, FINAL_CHECKPOINT, METRICS_FILE};
