//! Fixed-capacity on-policy rollout storage and GAE.
//!
//! With several environments the buffer is laid out env-major: each
//! environment owns a contiguous segment of `capacity / n_envs` steps in
//! time order, and advantages are computed per segment with that
//! environment's own bootstrap value.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    /// Normalized observations exactly as the policy saw them.
    pub observations: Vec<f64>,
    /// Raw (pre-clip) actions.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub observation: &'a [f64],
    pub action: &'a [f64],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

impl RolloutBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            observations: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            log_probs: vec![0.0; capacity],
            rewards: vec![0.0; capacity],
            values: vec![0.0; capacity],
            dones: vec![false; capacity],
            advantages: None,
            returns: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Write a transition at slot `index`; slots may be filled in any order.
    pub fn set(&mut self, index: usize, t: Transition<'_>) -> Result<()> {
        if index >= self.capacity {
            return Err(Error::InvalidArgument(format!("slot {index} beyond capacity {}", self.capacity)));
        }
        if t.observation.len() != self.obs_dim {
            return Err(Error::Dimension { expected: self.obs_dim, found: t.observation.len() });
        }
        if t.action.len() != self.act_dim {
            return Err(Error::Dimension { expected: self.act_dim, found: t.action.len() });
        }
        self.observations[index * self.obs_dim..(index + 1) * self.obs_dim].copy_from_slice(t.observation);
        self.actions[index * self.act_dim..(index + 1) * self.act_dim].copy_from_slice(t.action);
        self.log_probs[index] = t.log_prob;
        self.rewards[index] = t.reward;
        self.values[index] = t.value;
        self.dones[index] = t.done;
        Ok(())
    }

    /// Append in time order (single-environment use).
    pub fn push(&mut self, t: Transition<'_>) -> Result<()> {
        if self.is_full() {
            return Err(Error::InvalidArgument("rollout buffer is full".into()));
        }
        self.set(self.len, t)?;
        self.len += 1;
        Ok(())
    }

    /// Mark the buffer as holding `len` valid steps after `set` calls.
    pub fn set_len(&mut self, len: usize) {
        assert!(len <= self.capacity);
        self.len = len;
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.advantages = None;
        self.returns = None;
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// GAE over the whole buffer as a single time-ordered segment.
    pub fn compute_gae(&mut self, bootstrap_value: f64, gamma: f64, lambda: f64) -> Result<()> {
        self.compute_gae_segments(&[bootstrap_value], gamma, lambda)
    }

    /// GAE over `bootstraps.len()` equal env-major segments.
    pub fn compute_gae_segments(&mut self, bootstraps: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if !self.is_full() {
            return Err(Error::BufferNotFull { len: self.len, capacity: self.capacity });
        }
        let n_seg = bootstraps.len();
        if n_seg == 0 || self.capacity % n_seg != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} steps do not split into {n_seg} segments",
                self.capacity
            )));
        }
        let seg_len = self.capacity / n_seg;
        let mut adv = vec![0.0; self.capacity];
        for (s, &bootstrap) in bootstraps.iter().enumerate() {
            let base = s * seg_len;
            let mut next_value = bootstrap;
            let mut acc = 0.0;
            for t in (base..base + seg_len).rev() {
                let live = if self.dones[t] { 0.0 } else { 1.0 };
                let delta = self.rewards[t] + gamma * next_value * live - self.values[t];
                acc = delta + gamma * lambda * live * acc;
                adv[t] = acc;
                next_value = self.values[t];
            }
        }
        let returns = adv.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        self.advantages = Some(adv);
        self.returns = Some(returns);
        Ok(())
    }
}
