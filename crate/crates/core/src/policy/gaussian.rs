//! Diagonal Gaussian action distribution.
//!
//! Actions are sampled raw and clipped to [-1, 1] only for the environment;
//! log-probabilities always refer to the raw sample.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

/// `0.5 * ln(2 * pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub raw: Vec<f64>,
    pub clipped: Vec<f64>,
    pub log_prob: f64,
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - HALF_LN_2PI
        })
        .sum()
}

/// Differential entropy `sum(log_std + 0.5 * ln(2 pi e))`.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| l + 0.5 + HALF_LN_2PI).sum()
}

pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> SampledAction {
    let raw: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, l)| {
            let z: f64 = rng.sample(StandardNormal);
            m + l.exp() * z
        })
        .collect();
    let clipped = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    let log_prob = log_prob(mean, log_std, &raw);
    SampledAction { raw, clipped, log_prob }
}

/// The mean action, clipped, for deterministic evaluation.
pub fn mean_action(mean: &[f64]) -> Vec<f64> {
    mean.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}
