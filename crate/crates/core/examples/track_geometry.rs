//! Generate a course, print it as TOML and probe gate crossings and frame hits.
//!
//! cargo run --example track_geometry -- [seed]

use droneracer::geometry::{default_track, segment_frame_collision, segment_gate_crossing, GateLocal, DEFAULT_DRONE_RADIUS};

fn main() {
    let seed = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));
    let track = default_track(seed);
    print!("{}", track.to_toml());

    let gate = &track.gates[0];
    let through = |u: f64, v: f64| {
        (
            gate.from_local(GateLocal { n: -1.0, u, v }),
            gate.from_local(GateLocal { n: 1.0, u, v }),
        )
    };
    println!("\nprobing gate 0 at {:?}", gate.center.to_array());
    for (label, u, v) in [("center", 0.0, 0.0), ("near edge", 1.3, 0.0), ("through frame", 1.6, 0.0), ("outside", 3.0, 0.0)] {
        let (a, b) = through(u, v);
        let pass = segment_gate_crossing(a, b, gate);
        let hit = segment_frame_collision(a, b, gate, DEFAULT_DRONE_RADIUS);
        println!("{label:>14}: pass {:<5} frame contact {hit}", pass.is_some());
    }
    let (a, b) = through(0.0, 0.0);
    println!("{:>14}: pass {}", "reversed", segment_gate_crossing(b, a, gate).is_some());

    let length: f64 = track.gates.windows(2).map(|w| w[0].center.distance(w[1].center)).sum();
    println!("\n{} gates, {:.1} m center to center", track.len(), length);
}
