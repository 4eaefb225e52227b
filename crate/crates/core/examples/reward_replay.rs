//! Script a flight through the mini course and print the shaped reward at
//! every gate event, plus the episode total.
//!
//! cargo run --example reward_replay

use droneracer::dynamics::{step, DroneState, VelocityCommand};
use droneracer::geometry::{mini_track, DEFAULT_DRONE_RADIUS};
use droneracer::opponent::{expected_gate_times, plan, OpponentConfig};
use droneracer::reward::{compute_step, detect_events, init_status, RewardConfig};
use droneracer::harness::RunConfig;

fn main() -> droneracer::Result<()> {
    let track = mini_track(3);
    let run = RunConfig::mini();
    let (dyn_cfg, cfg) = (run.dynamics, RewardConfig::default());
    let start = track.gates[0].center - track.gates[0].normal() * 3.0;
    let times = expected_gate_times(&plan(&track, &OpponentConfig::default())?, start);
    let mut status = init_status(&track, &times, &cfg, 0.0)?;
    let mut state = DroneState::at_rest(start, track.gates[0].yaw, 0.0);
    println!("opponent-paced gate times {times:.2?}");

    let mut total = 0.0;
    while !status.done.is_done() {
        // steer toward the target gate center at about 5 m/s
        let target = track.gates[status.target_gate].center;
        let desired = (target - state.position).normalized() * 5.0;
        let cmd = VelocityCommand::new((desired - state.velocity) / dyn_cfg.command_scale);
        let next = step(&state, cmd, dyn_cfg.dt, &dyn_cfg)?;
        let events = detect_events(&state, &next, &status, &track, &cfg, DEFAULT_DRONE_RADIUS);
        let (r, s) = compute_step(&state, &next, &status, &events, &cfg, &times, &track)?;
        if let Some(p) = events.pass {
            println!("t={:5.2}s passed gate {} at {:.2?}, step reward {r:.2}", p.time, p.gate_id, p.crossing_point.to_array());
        }
        if events.collision {
            println!("t={:5.2}s frame contact, step reward {r:.2}", next.time);
        }
        total += r;
        state = next;
        status = s;
    }
    println!("{:?} after {:.2}s, return {total:.2} (tracked {:.2})", status.done, state.time, status.episode_return);
    Ok(())
}
