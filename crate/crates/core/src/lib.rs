//! Drone gate racing with reinforcement learning.
//!
//! The crate bundles a point-mass quadrotor simulator, gate geometry and a
//! procedural track generator, a pure-pursuit opponent, a shaped reward
//! with opponent-paced gate timers, and a from-scratch PPO trainer with
//! exact checkpoint resume and TCP telemetry.
//!
//! Start with the runnable programs under `examples/`.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod opponent;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
