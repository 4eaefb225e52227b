//! Newline-delimited JSON training metrics.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::telemetry::TelemetryServer;
use crate::error::{Error, Result};
use crate::policy::UpdateStats;
use crate::reward::Termination;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Episode,
    Update,
}

/// One log line. Every key is always written; fields that do not apply to
/// the record kind are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    pub global_step: u64,
    /// Index of the finished episode, or episodes completed so far for updates.
    pub episode: u64,
    pub episodic_return: Option<f64>,
    pub gates_passed: Option<usize>,
    pub collisions: Option<u32>,
    /// Episode duration in simulated seconds.
    pub duration: Option<f64>,
    pub termination: Option<Termination>,
    pub update: Option<u64>,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub approx_kl: Option<f64>,
    pub clip_fraction: Option<f64>,
}

pub const RECORD_KEYS: [&str; 13] = [
    "kind",
    "global_step",
    "episode",
    "episodic_return",
    "gates_passed",
    "collisions",
    "duration",
    "termination",
    "update",
    "policy_loss",
    "value_loss",
    "approx_kl",
    "clip_fraction",
];

/// Summary of one completed training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeInfo {
    pub index: u64,
    pub env: usize,
    pub global_step: u64,
    /// Sum of raw (unscaled) rewards.
    pub episodic_return: f64,
    pub gates_passed: usize,
    pub collisions: u32,
    pub duration: f64,
    pub termination: Termination,
}

impl MetricsRecord {
    pub fn episode(info: &EpisodeInfo) -> Self {
        Self {
            kind: RecordKind::Episode,
            global_step: info.global_step,
            episode: info.index,
            episodic_return: Some(info.episodic_return),
            gates_passed: Some(info.gates_passed),
            collisions: Some(info.collisions),
            duration: Some(info.duration),
            termination: Some(info.termination),
            update: None,
            policy_loss: None,
            value_loss: None,
            approx_kl: None,
            clip_fraction: None,
        }
    }

    pub fn update(global_step: u64, episodes: u64, update: u64, stats: &UpdateStats) -> Self {
        Self {
            kind: RecordKind::Update,
            global_step,
            episode: episodes,
            episodic_return: None,
            gates_passed: None,
            collisions: None,
            duration: None,
            termination: None,
            update: Some(update),
            policy_loss: Some(stats.policy_loss),
            value_loss: Some(stats.value_loss),
            approx_kl: Some(stats.approx_kl),
            clip_fraction: Some(stats.clip_fraction),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("metrics record serializes")
    }

    /// Parse one line, requiring every key to be present.
    pub fn parse_line(line: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::InvalidArgument(format!("bad metrics line: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("metrics line is not a JSON object".into()))?;
        if let Some(missing) = RECORD_KEYS.iter().find(|k| !obj.contains_key(**k)) {
            return Err(Error::InvalidArgument(format!("metrics line lacks `{missing}`")));
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidArgument(format!("bad metrics line: {e}")))
    }
}

/// Read every record from a metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| MetricsRecord::parse_line(&line.map_err(|e| Error::io(path, e))?))
        .collect()
}

/// Append-only metrics file, mirrored to telemetry clients when a server is attached.
pub struct MetricsLog {
    path: PathBuf,
    file: File,
    telemetry: Option<TelemetryServer>,
    written: u64,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            telemetry: None,
            written: 0,
        })
    }

    pub fn with_telemetry(mut self, server: TelemetryServer) -> Self {
        self.telemetry = Some(server);
        self
    }

    pub fn telemetry(&self) -> Option<&TelemetryServer> {
        self.telemetry.as_ref()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records written through this handle.
    pub fn written(&self) -> u64 {
        self.written
    }

    /// Write and flush one line, then publish it.
    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let mut line = record.to_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        if let Some(t) = &self.telemetry {
            line.pop();
            t.publish(line);
        }
        Ok(())
    }

    /// Detach the telemetry server, if any, so the caller can shut it down.
    pub fn take_telemetry(&mut self) -> Option<TelemetryServer> {
        self.telemetry.take()
    }
}
