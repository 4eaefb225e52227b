//! Interrupt a run at an update boundary, resume it from the checkpoint and
//! check the metrics log matches an uninterrupted run byte for byte.
//!
//! cargo run --release --example resume

use droneracer::harness::{train, RunConfig, TrainOptions, METRICS_FILE};

fn main() -> droneracer::Result<()> {
    let mut cfg = RunConfig::mini();
    cfg.train.total_steps = 8192;
    cfg.train.hidden = vec![64, 64, 64];
    let root = std::env::temp_dir().join("droneracer-resume");
    let _ = std::fs::remove_dir_all(&root);
    let (whole, split) = (root.join("whole"), root.join("split"));

    train(cfg.clone(), 11, &whole, &TrainOptions::default())?;
    let first = train(cfg.clone(), 11, &split, &TrainOptions { stop_after: Some(4096), ..TrainOptions::default() })?;
    println!("interrupted at step {}", first.global_step);
    let resume = TrainOptions { resume: Some(first.final_checkpoint), ..TrainOptions::default() };
    let second = train(cfg, 11, &split, &resume)?;
    println!("resumed to step {}", second.global_step);

    let a = std::fs::read(whole.join(METRICS_FILE)).expect("metrics");
    let b = std::fs::read(split.join(METRICS_FILE)).expect("metrics");
    println!("metrics identical: {} ({} bytes)", a == b, a.len());
    Ok(())
}
