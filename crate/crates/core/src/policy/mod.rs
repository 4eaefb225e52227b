//! Actor-critic function approximation and the PPO learner.
//!
//! Parameters are owned by a single training driver. Rollout collection
//! only reads them (any number of readers may share a snapshot), while
//! `ppo_update` needs exclusive access.

pub mod buffer;
pub mod gaussian;
pub mod mlp;
pub mod normalize;
pub mod params;
pub mod ppo;

pub use buffer::{RolloutBuffer, Transition};
pub use gaussian::{entropy, log_prob, mean_action, sample_action, SampledAction};
pub use mlp::MlpShape;
pub use normalize::{ObsNormalizer, RewardScaler, RunningMoments};
pub use params::{PolicyLayout, PolicyOutput, PolicyParams};
pub use ppo::{clip_grad_norm, loss_and_grad, ppo_update, Adam, Minibatch, MinibatchLoss, TrainConfig, UpdateStats};
