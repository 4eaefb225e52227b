//! Clipped-surrogate PPO update with an Adam optimizer.
//!
//! Total minibatch loss:
//!
//! ```text
//! L = -mean(min(rho * A, clip(rho, 1 - eps, 1 + eps) * A))
//!     + value_coef * mean((V - R)^2)
//!     - entropy_coef * H
//! ```
//!
//! where `rho = exp(log pi(a|s) - log pi_old(a|s))`, `A` are advantages
//! standardized within the minibatch and `pi_old` is represented by the
//! log-probabilities stored at rollout time.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gaussian::{entropy, HALF_LN_2PI};
use super::params::PolicyParams;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rollout_steps: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    /// Stop the epoch loop early once approx KL exceeds 1.5x this value.
    pub target_kl: Option<f64>,
    /// Linearly decay the learning rate to zero over `total_steps`.
    pub anneal_lr: bool,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rollout_steps: 2048,
            minibatch_size: 256,
            epochs_per_update: 10,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            total_steps: 1_000_000,
            target_kl: None,
            anneal_lr: false,
            hidden: vec![256, 256, 256],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip_epsilon > 0.0
            && self.clip_epsilon < 1.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.learning_rate > 0.0
            && self.minibatch_size > 0
            && self.rollout_steps > 0
            && self.rollout_steps % self.minibatch_size == 0
            && self.epochs_per_update > 0
            && self.max_grad_norm > 0.0
            && !self.hidden.is_empty()
            && self.hidden.iter().all(|&h| h > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("train config violates its invariants".into()))
        }
    }

    pub fn learning_rate_at(&self, steps_done: u64) -> f64 {
        if self.anneal_lr && self.total_steps > 0 {
            let frac = 1.0 - (steps_done as f64 / self.total_steps as f64).min(1.0);
            self.learning_rate * frac
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Scale `grad` so its global L2 norm is at most `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    /// Gather `indices` from a buffer whose advantages are computed, standardizing them.
    pub fn gather(buffer: &RolloutBuffer, indices: &[usize]) -> Result<Self> {
        let (adv, ret) = match (&buffer.advantages, &buffer.returns) {
            (Some(a), Some(r)) => (a, r),
            _ => return Err(Error::AdvantagesMissing),
        };
        let (od, ad) = (buffer.obs_dim(), buffer.act_dim());
        let mut observations = Array2::zeros((indices.len(), od));
        let mut actions = Array2::zeros((indices.len(), ad));
        for (row, &i) in indices.iter().enumerate() {
            observations.row_mut(row).as_slice_mut().unwrap().copy_from_slice(buffer.observation(i));
            actions.row_mut(row).as_slice_mut().unwrap().copy_from_slice(buffer.action(i));
        }
        let raw: Vec<f64> = indices.iter().map(|&i| adv[i]).collect();
        Ok(Self {
            observations,
            actions,
            old_log_probs: indices.iter().map(|&i| buffer.log_probs[i]).collect(),
            advantages: standardize(&raw),
            returns: indices.iter().map(|&i| ret[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

/// Zero mean, unit (population) std; a single element maps to zero.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MinibatchLoss {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest `|rho - 1|` in the minibatch.
    pub max_ratio_deviation: f64,
}

impl MinibatchLoss {
    fn is_finite(&self) -> bool {
        [self.policy_loss, self.value_loss, self.entropy, self.total, self.approx_kl]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Log-probabilities of `actions` under the current actor for a batch of observations.
pub fn batch_log_probs(params: &PolicyParams, observations: ArrayView2<f64>, actions: ArrayView2<f64>) -> Vec<f64> {
    let cache = params.layout.actor.forward(params.actor(), observations);
    let mean = cache.output();
    let log_std = params.log_std();
    mean.rows()
        .into_iter()
        .zip(actions.rows())
        .map(|(m, a)| {
            m.iter()
                .zip(a.iter())
                .zip(log_std)
                .map(|((m, a), l)| {
                    let z = (a - m) / l.exp();
                    -0.5 * z * z - l - HALF_LN_2PI
                })
                .sum()
        })
        .collect()
}

/// Loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(params: &PolicyParams, batch: &Minibatch, cfg: &TrainConfig) -> (MinibatchLoss, Vec<f64>) {
    let layout = &params.layout;
    let b = batch.len() as f64;
    let act_dim = layout.act_dim();
    let log_std = params.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let eps = cfg.clip_epsilon;

    let actor_cache = layout.actor.forward(params.actor(), batch.observations.view());
    let mean = actor_cache.output();
    let critic_cache = layout.critic.forward(params.critic(), batch.observations.view());
    let values = critic_cache.output();

    let mut grad = vec![0.0; layout.num_params()];
    let mut d_mean = Array2::<f64>::zeros((batch.len(), act_dim));
    let mut d_log_std = vec![0.0; act_dim];
    let mut d_values = Array2::<f64>::zeros((batch.len(), 1));

    let mut surrogate_sum = 0.0;
    let mut value_sq_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    let mut max_dev: f64 = 0.0;

    for i in 0..batch.len() {
        let a = batch.actions.row(i);
        let m = mean.row(i);
        let mut logp = 0.0;
        for j in 0..act_dim {
            let diff = a[j] - m[j];
            logp += -0.5 * diff * diff * inv_var[j] - log_std[j] - HALF_LN_2PI;
        }
        let log_ratio = logp - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped_obj = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        surrogate_sum += unclipped.min(clipped_obj);
        kl_sum += (ratio - 1.0) - log_ratio;
        max_dev = max_dev.max((ratio - 1.0).abs());
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        // d(-mean surrogate)/d logp; zero where the clipped branch is selected
        if unclipped <= clipped_obj {
            let g_logp = -adv * ratio / b;
            for j in 0..act_dim {
                let diff = a[j] - m[j];
                d_mean[[i, j]] = g_logp * diff * inv_var[j];
                d_log_std[j] += g_logp * (diff * diff * inv_var[j] - 1.0);
            }
        }
        let err = values[[i, 0]] - batch.returns[i];
        value_sq_sum += err * err;
        d_values[[i, 0]] = 2.0 * cfg.value_coef * err / b;
    }
    for g in &mut d_log_std {
        *g -= cfg.entropy_coef;
    }

    let ar = layout.actor_range();
    layout.actor.backward(params.actor(), &actor_cache, d_mean, &mut grad[ar]);
    let cr = layout.critic_range();
    layout.critic.backward(params.critic(), &critic_cache, d_values, &mut grad[cr]);
    grad[layout.log_std_range()].copy_from_slice(&d_log_std);

    let policy_loss = -surrogate_sum / b;
    let value_loss = value_sq_sum / b;
    let ent = entropy(log_std);
    let loss = MinibatchLoss {
        policy_loss,
        value_loss,
        entropy: ent,
        total: policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * ent,
        approx_kl: kl_sum / b,
        clip_fraction: clipped as f64 / b,
        max_ratio_deviation: max_dev,
    };
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub minibatches: usize,
    /// Ratio deviation on the very first minibatch, where theta equals theta_old.
    pub first_ratio_deviation: f64,
    /// Largest post-clip gradient norm seen.
    pub max_clipped_grad_norm: f64,
}

/// Several epochs of minibatch PPO on a buffer with advantages.
pub fn ppo_update(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if buffer.advantages.is_none() {
        return Err(Error::AdvantagesMissing);
    }
    if optimizer.m.len() != params.data.len() {
        return Err(Error::Dimension { expected: params.data.len(), found: optimizer.m.len() });
    }
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    let mut acc = UpdateStats::default();
    'epochs: for _ in 0..cfg.epochs_per_update {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size) {
            let batch = Minibatch::gather(buffer, chunk)?;
            let (loss, mut grad) = loss_and_grad(params, &batch, cfg);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "PPO loss after {} minibatches: {loss:?}",
                    acc.minibatches
                )));
            }
            if acc.minibatches == 0 {
                acc.first_ratio_deviation = loss.max_ratio_deviation;
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            let post = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            acc.max_clipped_grad_norm = acc.max_clipped_grad_norm.max(post);
            optimizer.apply(&mut params.data, &grad, learning_rate);
            params.clamp_log_std();

            acc.policy_loss += loss.policy_loss;
            acc.value_loss += loss.value_loss;
            acc.approx_kl += loss.approx_kl;
            acc.clip_fraction += loss.clip_fraction;
            acc.entropy += loss.entropy;
            acc.minibatches += 1;
            if cfg.target_kl.is_some_and(|t| loss.approx_kl > 1.5 * t) {
                break 'epochs;
            }
        }
    }
    let n = acc.minibatches.max(1) as f64;
    acc.policy_loss /= n;
    acc.value_loss /= n;
    acc.approx_kl /= n;
    acc.clip_fraction /= n;
    acc.entropy /= n;
    Ok(acc)
}
