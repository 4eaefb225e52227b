//! Train on the three-gate mini track, then evaluate the final policy.
//!
//! cargo run --release --example train_mini -- [seed] [total_steps] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use droneracer::geometry::SpawnOverride;
use droneracer::harness::{evaluate, run, EvalOptions, MetricsRecord, RecordKind, RunConfig, Trainer};

fn main() -> droneracer::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let steps: Option<u64> = args.next().map(|s| s.parse().expect("total_steps"));
    let out = args.next().map_or_else(|| std::env::temp_dir().join("droneracer-mini"), PathBuf::from);
    let _ = std::fs::remove_dir_all(&out);

    let mut cfg = RunConfig::mini();
    if let Some(steps) = steps {
        cfg.train.total_steps = steps;
    }
    let mut trainer = Trainer::new(cfg, seed)?;
    let start = Instant::now();
    let summary = run(&mut trainer, &out, None, None)?;
    println!(
        "trained {} steps, {} episodes, {} updates in {:.0?}",
        summary.global_step,
        summary.episodes,
        summary.updates,
        start.elapsed()
    );

    let records = droneracer::harness::read_metrics(&out.join(droneracer::harness::METRICS_FILE))?;
    let returns: Vec<f64> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Episode)
        .filter_map(|r: &MetricsRecord| r.episodic_return)
        .collect();
    for chunk in returns.chunks((returns.len() / 10).max(1)) {
        println!("  mean return {:8.2} over {} episodes", chunk.iter().sum::<f64>() / chunk.len() as f64, chunk.len());
    }

    let ckpt = trainer.checkpoint();
    for (label, spawn) in [
        ("spawn band", SpawnOverride::default()),
        ("far edge, 45 deg yaw error", SpawnOverride { distance: Some(3.5), yaw_error: 45f64.to_radians() }),
    ] {
        let s = evaluate(&ckpt, &ckpt.track, &EvalOptions { episodes: 100, spawn, seed: 1, ..EvalOptions::default() })?;
        println!(
            "{label}: completion {:.2}, gates {:.2}, time {:.2}s, collisions {:.2}",
            s.completion_rate, s.mean_gates, s.mean_time, s.mean_collisions
        );
    }
    Ok(())
}
