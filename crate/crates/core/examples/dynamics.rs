//! Fly a constant velocity-delta command and read the noisy sensors.
//!
//! cargo run --example dynamics

use droneracer::dynamics::{read_gps, read_imu, step, DroneState, DynamicsConfig, VelocityCommand};
use droneracer::rng::{stream, Stream};
use droneracer::Vec3;

fn main() -> droneracer::Result<()> {
    let cfg = DynamicsConfig {
        imu_noise_std: [0.05, 0.05, 0.05, 0.01, 0.01, 0.01, 0.005],
        gps_noise_std: 0.05,
        ..DynamicsConfig::default()
    };
    let mut sensors = stream(0, Stream::Sensors, 0);
    let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 2.0), 0.0, 0.0);
    let cmd = VelocityCommand::new(Vec3::new(0.5, 0.25, 0.0));
    println!("{:>5} {:>24} {:>24} {:>6} {:>6}", "t", "position", "velocity", "yaw", "pitch");
    for i in 0..=60 {
        if i % 10 == 0 {
            let p = s.position;
            let v = s.velocity;
            println!(
                "{:5.2} ({:6.2},{:6.2},{:6.2}) ({:6.2},{:6.2},{:6.2}) {:6.3} {:6.3}",
                s.time, p.x, p.y, p.z, v.x, v.y, v.z, s.attitude.yaw, s.attitude.pitch
            );
        }
        s = step(&s, cmd, cfg.dt, &cfg)?;
    }
    let imu = read_imu(&s, &cfg.imu_noise_std, &mut sensors);
    let gps = read_gps(&s, cfg.gps_noise_std, &mut sensors);
    println!("\nimu velocity {:?}", imu.linear_velocity.to_array());
    println!("gps position {:?}", gps.to_array());
    println!("speed {:.2} m/s (cap {} m/s)", s.velocity.norm(), cfg.v_max);
    Ok(())
}
