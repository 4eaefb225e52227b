//! Head-to-head races against the pure-pursuit opponent.
//!
//! Without arguments a scripted pilot that copies the opponent's path races
//! it on the default course: every race is a same-step finish, and ties go
//! to the opponent. With a checkpoint path the trained policy races instead.
//!
//! cargo run --release --example race -- [ckpt] [episodes]

use std::path::PathBuf;

use droneracer::geometry::default_track;
use droneracer::harness::{race, race_pilot, Checkpoint, ClonePilot, EnvConfig, RunConfig};

fn main() -> droneracer::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().map(PathBuf::from);
    let episodes = args.next().map_or(10, |s| s.parse().expect("episodes"));
    let summary = match ckpt {
        Some(path) => {
            let ckpt = Checkpoint::load(&path)?;
            race(&ckpt, &ckpt.track, episodes, 0)?
        }
        None => {
            let cfg = EnvConfig::from_run(&RunConfig::default());
            race_pilot(&cfg, &default_track(0), &mut ClonePilot::default(), episodes, 0)?
        }
    };
    println!(
        "agent wins {}  opponent wins {}  agent DNFs {}",
        summary.agent_wins, summary.opponent_wins, summary.agent_dnfs
    );
    Ok(())
}
