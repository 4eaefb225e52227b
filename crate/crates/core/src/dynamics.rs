//! Point-mass quadrotor driven by velocity-delta commands.
//!
//! The plant is a first-order velocity lag: each command sets a target
//! velocity relative to the current one and the true velocity relaxes
//! toward it with time constant `tau`. Attitude is kinematic only: yaw
//! follows the horizontal heading and roll/pitch bank with acceleration so
//! the synthetic IMU has something meaningful to report.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vec3::{wrap_angle, Vec3};

const GRAVITY: f64 = 9.81;
const MAX_TILT: f64 = std::f64::consts::PI / 6.0;
/// Below this horizontal speed the heading is undefined and yaw holds.
const HEADING_SPEED_EPS: f64 = 1e-3;

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn to_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Attitude,
    pub angular_velocity: Vec3,
    pub time: f64,
}

impl DroneState {
    pub fn at_rest(position: Vec3, yaw: f64, time: f64) -> Self {
        Self {
            position,
            attitude: Attitude {
                yaw: wrap_angle(yaw),
                ..Attitude::default()
            },
            time,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.angular_velocity.is_finite()
            && self.attitude.to_array().iter().all(|a| a.is_finite())
            && self.time.is_finite()
    }
}

/// Velocity delta in units of `command_scale`; components are clipped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityCommand {
    pub dv: Vec3,
}

impl VelocityCommand {
    pub fn new(dv: Vec3) -> Self {
        Self { dv }
    }

    pub fn clipped(self) -> Vec3 {
        Vec3::new(
            self.dv.x.clamp(-1.0, 1.0),
            self.dv.y.clamp(-1.0, 1.0),
            self.dv.z.clamp(-1.0, 1.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub tau: f64,
    pub command_scale: f64,
    pub v_max: f64,
    pub yaw_rate_max: f64,
    pub dt: f64,
    /// Per-channel std: vx, vy, vz, wx, wy, wz, attitude (shared by roll/pitch/yaw).
    pub imu_noise_std: [f64; 7],
    pub gps_noise_std: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            command_scale: 2.0,
            v_max: 15.0,
            yaw_rate_max: std::f64::consts::PI,
            dt: 0.05,
            imu_noise_std: [0.0; 7],
            gps_noise_std: 0.0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("command_scale", self.command_scale),
            ("v_max", self.v_max),
            ("yaw_rate_max", self.yaw_rate_max),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("dynamics.{name} must be positive, got {v}")));
            }
        }
        if self.imu_noise_std.iter().chain([&self.gps_noise_std]).any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("dynamics noise std must be >= 0".into()));
        }
        Ok(())
    }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Advance the drone by one control step.
pub fn step(state: &DroneState, cmd: VelocityCommand, dt: f64, cfg: &DynamicsConfig) -> Result<DroneState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !cmd.dv.is_finite() {
        return Err(Error::NonFinite(format!("velocity command {:?}", cmd.dv)));
    }
    let v = state.velocity;
    let target = clamp_norm(v + cmd.clipped() * cfg.command_scale, cfg.v_max);
    let decay = (-dt / cfg.tau).exp();
    let v_next = clamp_norm(target + (v - target) * decay, cfg.v_max);
    // exact integral of the exponential relaxation over the step
    let gap = v - target;
    let position = state.position + target * dt + gap * (cfg.tau * (1.0 - decay));

    let yaw = if v_next.norm_xy() > HEADING_SPEED_EPS {
        let heading = v_next.y.atan2(v_next.x);
        let err = wrap_angle(heading - state.attitude.yaw);
        let max_turn = cfg.yaw_rate_max * dt;
        wrap_angle(state.attitude.yaw + err.clamp(-max_turn, max_turn))
    } else {
        state.attitude.yaw
    };

    let accel_body = ((v_next - v) / dt).rotate_z(-yaw);
    let pitch = (accel_body.x / GRAVITY).clamp(-MAX_TILT, MAX_TILT);
    let roll = (accel_body.y / GRAVITY).clamp(-MAX_TILT, MAX_TILT);
    let attitude = Attitude { roll, pitch, yaw };
    let angular_velocity = Vec3::new(
        (roll - state.attitude.roll) / dt,
        (pitch - state.attitude.pitch) / dt,
        wrap_angle(yaw - state.attitude.yaw) / dt,
    );

    Ok(DroneState {
        position,
        velocity: v_next,
        attitude,
        angular_velocity,
        time: state.time + dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    pub attitude: Attitude,
}

fn noisy(value: f64, std: f64, rng: &mut Rng) -> f64 {
    if std > 0.0 {
        let n: f64 = rng.sample(StandardNormal);
        value + std * n
    } else {
        value
    }
}

pub fn read_imu(state: &DroneState, noise_std: &[f64; 7], rng: &mut Rng) -> ImuReading {
    let v = state.velocity;
    let w = state.angular_velocity;
    let a = state.attitude;
    ImuReading {
        linear_velocity: Vec3::new(
            noisy(v.x, noise_std[0], rng),
            noisy(v.y, noise_std[1], rng),
            noisy(v.z, noise_std[2], rng),
        ),
        angular_velocity: Vec3::new(
            noisy(w.x, noise_std[3], rng),
            noisy(w.y, noise_std[4], rng),
            noisy(w.z, noise_std[5], rng),
        ),
        attitude: Attitude {
            roll: noisy(a.roll, noise_std[6], rng),
            pitch: noisy(a.pitch, noise_std[6], rng),
            yaw: noisy(a.yaw, noise_std[6], rng),
        },
    }
}

pub fn read_gps(state: &DroneState, noise_std: f64, rng: &mut Rng) -> Vec3 {
    let p = state.position;
    Vec3::new(
        noisy(p.x, noise_std, rng),
        noisy(p.y, noise_std, rng),
        noisy(p.z, noise_std, rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    #[test]
    fn rest_is_a_fixed_point() {
        let cfg = DynamicsConfig::default();
        let s = DroneState::at_rest(Vec3::new(1.0, 2.0, 3.0), 0.4, 0.0);
        let n = step(&s, VelocityCommand::default(), cfg.dt, &cfg).unwrap();
        assert_eq!(n.position, s.position);
        assert_eq!(n.velocity, Vec3::ZERO);
        assert_eq!(n.attitude.yaw, s.attitude.yaw);
        assert!((n.time - cfg.dt).abs() < 1e-15);
    }

    #[test]
    fn zero_lag_limit() {
        let cfg = DynamicsConfig {
            tau: 1e-9,
            command_scale: 2.0,
            ..DynamicsConfig::default()
        };
        let s = DroneState::default();
        let dt = 0.05;
        let n = step(&s, VelocityCommand::new(Vec3::new(1.0, 0.0, 0.0)), dt, &cfg).unwrap();
        assert!((n.velocity - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((n.position - Vec3::new(2.0 * dt, 0.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn rejects_non_positive_dt() {
        let cfg = DynamicsConfig::default();
        assert!(step(&DroneState::default(), VelocityCommand::default(), 0.0, &cfg).is_err());
        assert!(step(&DroneState::default(), VelocityCommand::default(), -0.1, &cfg).is_err());
    }

    #[test]
    fn commands_are_clipped() {
        let cfg = DynamicsConfig::default();
        let s = DroneState::default();
        let a = step(&s, VelocityCommand::new(Vec3::new(50.0, -7.0, 1.0)), 0.05, &cfg).unwrap();
        let b = step(&s, VelocityCommand::new(Vec3::new(1.0, -1.0, 1.0)), 0.05, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_sensors_are_exact() {
        let mut rng = stream(1, Stream::Sensors, 0);
        let s = DroneState {
            position: Vec3::new(1.0, -2.0, 3.0),
            velocity: Vec3::new(0.5, 0.25, -1.0),
            attitude: Attitude { roll: 0.1, pitch: -0.2, yaw: 1.0 },
            angular_velocity: Vec3::new(0.01, 0.02, 0.03),
            time: 4.0,
        };
        let imu = read_imu(&s, &[0.0; 7], &mut rng);
        assert_eq!(imu.linear_velocity, s.velocity);
        assert_eq!(imu.angular_velocity, s.angular_velocity);
        assert_eq!(imu.attitude, s.attitude);
        assert_eq!(read_gps(&s, 0.0, &mut rng), s.position);
    }

    #[test]
    fn imu_noise_mean_is_unbiased() {
        let mut rng = stream(11, Stream::Sensors, 0);
        let s = DroneState {
            velocity: Vec3::new(3.0, -1.0, 0.5),
            ..DroneState::default()
        };
        let mut noise = [0.0; 7];
        noise[..3].copy_from_slice(&[0.1; 3]);
        let n = 10_000;
        let mut sum = Vec3::ZERO;
        for _ in 0..n {
            sum += read_imu(&s, &noise, &mut rng).linear_velocity;
        }
        let mean = sum / n as f64;
        let bound = 3.0 * 0.1 / (n as f64).sqrt();
        for (m, t) in mean.to_array().iter().zip(s.velocity.to_array()) {
            assert!((m - t).abs() < bound, "{m} vs {t}");
        }
    }

    #[test]
    fn gps_noise_std() {
        let mut rng = stream(12, Stream::Sensors, 0);
        let s = DroneState::default();
        let n = 10_000;
        let reads: Vec<Vec3> = (0..n).map(|_| read_gps(&s, 0.05, &mut rng)).collect();
        for axis in 0..3 {
            let xs: Vec<f64> = reads.iter().map(|r| r.to_array()[axis]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            assert!((0.045..=0.055).contains(&sd), "axis {axis}: {sd}");
        }
    }

    #[test]
    fn sensor_sequences_are_reproducible() {
        let s = DroneState::default();
        let noise = [0.2; 7];
        let mut a = stream(5, Stream::Sensors, 0);
        let mut b = stream(5, Stream::Sensors, 0);
        for _ in 0..50 {
            assert_eq!(read_imu(&s, &noise, &mut a), read_imu(&s, &noise, &mut b));
            assert_eq!(read_gps(&s, 0.3, &mut a), read_gps(&s, 0.3, &mut b));
        }
    }

    /// With a constant command the target keeps moving with the velocity, so
    /// the continuous-time limit is constant acceleration `dv * scale / tau`.
    fn max_velocity_error(dt: f64) -> f64 {
        let cfg = DynamicsConfig::default();
        let dv = Vec3::new(0.5, -0.3, 0.2);
        let accel = dv * (cfg.command_scale / cfg.tau);
        let steps = (1.0 / dt).round() as usize;
        let mut s = DroneState::default();
        let mut worst: f64 = 0.0;
        for k in 1..=steps {
            s = step(&s, VelocityCommand::new(dv), dt, &cfg).unwrap();
            let exact = accel * (k as f64 * dt);
            worst = worst.max((s.velocity - exact).norm());
        }
        worst
    }

    #[test]
    fn converges_first_order_to_continuous_limit() {
        let e1 = max_velocity_error(1e-3);
        let e2 = max_velocity_error(5e-4);
        assert!(e1 < 1e-2, "error {e1}");
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn speed_never_exceeds_vmax(cmds in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..400)) {
            let cfg = DynamicsConfig::default();
            let mut s = DroneState::default();
            for (x, y, z) in cmds {
                s = step(&s, VelocityCommand::new(Vec3::new(x, y, z)), cfg.dt, &cfg).unwrap();
                prop_assert!(s.velocity.norm() <= cfg.v_max + 1e-9);
                prop_assert!(s.is_finite());
            }
        }

        #[test]
        fn zero_command_never_speeds_up(vx in -10.0f64..10.0, vy in -10.0f64..10.0, vz in -5.0f64..5.0, n in 1usize..200) {
            let cfg = DynamicsConfig::default();
            let mut s = DroneState { velocity: Vec3::new(vx, vy, vz), ..DroneState::default() };
            for _ in 0..n {
                let next = step(&s, VelocityCommand::default(), cfg.dt, &cfg).unwrap();
                prop_assert!(next.velocity.norm() <= s.velocity.norm() + 1e-12);
                s = next;
            }
        }

        #[test]
        fn step_is_deterministic(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let cfg = DynamicsConfig::default();
            let s = DroneState { velocity: Vec3::new(1.0, 2.0, 0.0), ..DroneState::default() };
            let c = VelocityCommand::new(Vec3::new(x, y, z));
            prop_assert_eq!(step(&s, c, cfg.dt, &cfg).unwrap(), step(&s, c, cfg.dt, &cfg).unwrap());
        }
    }
}
