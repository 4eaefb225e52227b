//! Actor and critic parameters in one flat vector.
//!
//! Layout: `[actor MLP | log_std | critic MLP]`. Keeping everything in a
//! single slice makes the optimizer, gradient clipping and checkpointing
//! operate on one contiguous buffer. The actor and critic share nothing.

use ndarray::ArrayView2;

use super::mlp::MlpShape;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyLayout {
    pub actor: MlpShape,
    pub critic: MlpShape,
}

impl PolicyLayout {
    pub fn new(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        Self {
            actor: MlpShape::new(sizes(act_dim)),
            critic: MlpShape::new(sizes(1)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.actor.sizes();
        &s[1..s.len() - 1]
    }

    pub fn actor_range(&self) -> std::ops::Range<usize> {
        0..self.actor.num_params()
    }

    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        let a = self.actor.num_params();
        a..a + self.act_dim()
    }

    pub fn critic_range(&self) -> std::ops::Range<usize> {
        let s = self.log_std_range().end;
        s..s + self.critic.num_params()
    }

    pub fn num_params(&self) -> usize {
        self.critic_range().end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub layout: PolicyLayout,
    pub data: Vec<f64>,
}

/// Output of the actor and critic for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

impl PolicyParams {
    pub fn zeros(layout: PolicyLayout) -> Self {
        let n = layout.num_params();
        Self { layout, data: vec![0.0; n] }
    }

    /// Random initialization with a near-zero action mean and unit std.
    pub fn init(layout: PolicyLayout, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(layout);
        let (a, c) = (p.layout.actor_range(), p.layout.critic_range());
        p.layout.actor.clone().init(&mut p.data[a], 0.01, rng);
        p.layout.critic.clone().init(&mut p.data[c], 1.0, rng);
        p
    }

    pub fn actor(&self) -> &[f64] {
        &self.data[self.layout.actor_range()]
    }

    pub fn critic(&self) -> &[f64] {
        &self.data[self.layout.critic_range()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.data[self.layout.log_std_range()]
    }

    pub fn clamp_log_std(&mut self) {
        let r = self.layout.log_std_range();
        for l in &mut self.data[r] {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Single-observation forward pass.
    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput> {
        if obs.len() != self.layout.obs_dim() {
            return Err(Error::Dimension {
                expected: self.layout.obs_dim(),
                found: obs.len(),
            });
        }
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        let mean = self.layout.actor.forward(self.actor(), x).output().row(0).to_vec();
        let value = self.layout.critic.forward(self.critic(), x).output()[[0, 0]];
        Ok(PolicyOutput {
            mean,
            log_std: self.log_std().to_vec(),
            value,
        })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        if obs.len() != self.layout.obs_dim() {
            return Err(Error::Dimension {
                expected: self.layout.obs_dim(),
                found: obs.len(),
            });
        }
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        Ok(self.layout.critic.forward(self.critic(), x).output()[[0, 0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn layout_is_contiguous() {
        let l = PolicyLayout::new(21, &[256, 256, 256], 3);
        assert_eq!(l.actor_range().end, l.log_std_range().start);
        assert_eq!(l.log_std_range().end, l.critic_range().start);
        assert_eq!(l.num_params(), l.actor.num_params() + 3 + l.critic.num_params());
        assert_eq!(l.hidden(), &[256, 256, 256]);
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let p = PolicyParams::zeros(PolicyLayout::new(21, &[256, 256, 256], 3));
        let out = p.forward(&[0.7; 21]).unwrap();
        assert_eq!(out.mean, vec![0.0; 3]);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn forward_checks_dimension_and_is_deterministic() {
        let p = PolicyParams::init(PolicyLayout::new(4, &[8, 8, 8], 3), &mut stream(1, Stream::Init, 0));
        assert!(matches!(p.forward(&[0.0; 5]), Err(Error::Dimension { .. })));
        let obs = [0.1, -0.4, 0.9, 2.0];
        assert_eq!(p.forward(&obs).unwrap(), p.forward(&obs).unwrap());
        assert!(p.forward(&obs).unwrap().mean.iter().all(|m| m.is_finite()));
    }
}
