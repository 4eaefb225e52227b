//! Let the pure-pursuit opponent fly the default course alone and compare
//! its measured gate times with the closed-form polyline timing.
//!
//! cargo run --example opponent_lap -- [seed]

use droneracer::dynamics::DroneState;
use droneracer::geometry::{default_track, segment_frame_collision, segment_gate_crossing, DEFAULT_DRONE_RADIUS};
use droneracer::opponent::{expected_gate_times, plan, Follower, OpponentConfig};

fn main() -> droneracer::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let track = default_track(seed);
    let cfg = OpponentConfig::default();
    let dt = 0.05;
    let start = track.gates[0].center - track.gates[0].normal() * 3.0;
    let plan = plan(&track, &cfg)?;
    let expected = expected_gate_times(&plan, start);
    let mut follower = Follower::new(plan, DroneState::at_rest(start, track.gates[0].yaw, 0.0));

    let mut passes = Vec::new();
    let mut collisions = 0;
    while !follower.finished() {
        let prev = follower.state;
        let next = follower.advance(dt)?;
        if track.gates.iter().any(|g| segment_frame_collision(prev.position, next.position, g, DEFAULT_DRONE_RADIUS)) {
            collisions += 1;
        }
        if let Some(gate) = track.gates.get(passes.len()) {
            if segment_gate_crossing(prev.position, next.position, gate).is_some() {
                passes.push(next.time);
            }
        }
    }
    println!("gate  expected  measured  steps off");
    for (i, (m, e)) in passes.iter().zip(&expected).enumerate() {
        println!("{i:>4}  {e:8.3}  {m:8.3}  {:9.2}", (m - e) / dt);
    }
    println!("{} of {} gates, {collisions} frame contacts", passes.len(), track.len());
    Ok(())
}
