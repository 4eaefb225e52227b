//! Evaluate a saved checkpoint from the normal spawn band and from the far
//! edge of the band with a 45 degree heading error.
//!
//! cargo run --release --example evaluate_checkpoint -- <ckpt> [episodes]

use std::path::PathBuf;

use droneracer::geometry::SpawnOverride;
use droneracer::harness::{evaluate, Checkpoint, EvalOptions};

fn main() -> droneracer::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().expect("usage: evaluate_checkpoint <ckpt> [episodes]"));
    let episodes = args.next().map_or(100, |s| s.parse().expect("episodes"));
    let ckpt = Checkpoint::load(&path)?;
    println!("checkpoint at step {} ({} updates)", ckpt.global_step, ckpt.updates);
    for (label, spawn) in [
        ("spawn band", SpawnOverride::default()),
        ("recovery", SpawnOverride { distance: Some(ckpt.track.spawn_band[1]), yaw_error: 45f64.to_radians() }),
    ] {
        let opts = EvalOptions { episodes, deterministic: true, seed: 0, spawn };
        let s = evaluate(&ckpt, &ckpt.track, &opts)?;
        println!(
            "{label:>10}: completion {:5.1}%  gates {:.2}  time {:.2}s  collisions {:.2}  return {:.1}",
            100.0 * s.completion_rate,
            s.mean_gates,
            s.mean_time,
            s.mean_collisions,
            s.mean_return
        );
    }
    Ok(())
}
