//! Proximal policy optimization: actor-critic networks with hand-rolled
//! reverse-mode gradients, rollout collection over parallel environments,
//! GAE, and the clipped-surrogate update.

pub mod adam;
pub mod gradcheck;
pub mod mlp;
pub mod rollout;
pub mod train;

mod eval;
mod loss;

pub use adam::Adam;
pub use eval::{evaluate_policy, EpisodeEval, EvalReport};
pub use gradcheck::{run_gradcheck, GradCheckReport};
pub use loss::{ppo_losses, LossStats, MinibatchRef, PolicyGrads, PpoLossOutput};
pub use mlp::{log_prob, sample_and_logprob, Activation, GaussianPolicy, Mlp, MlpGrads};
pub use rollout::{compute_gae, AdvantageSet, RolloutBuffer};
pub use train::{train, IterationStats, TrainError, TrainOutput, Trainer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rollout buffer has not been filled")]
    UnfilledBuffer,
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

/// PPO hyperparameters and run sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Discount factor.
    pub gamma: f64,
    /// GAE decay parameter.
    pub lam: f64,
    /// Surrogate clipping parameter.
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub minibatches: u32,
    /// Rollout length T per environment per iteration.
    pub steps_per_env: u32,
    /// Parallel environments N.
    pub num_envs: u32,
    pub iterations: u32,
    /// Hidden layer widths shared by actor and critic.
    pub hidden_layers: Vec<usize>,
    /// Initial log standard deviation of the policy (0 = std 1.0).
    pub init_log_std: f64,
    /// Standardize advantages over each iteration's batch.
    pub advantage_norm: bool,
    /// Iterations between checkpoint exports (0 = final checkpoint only).
    pub checkpoint_interval: u32,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            value_coef: 1.0,
            entropy_coef: 0.005,
            learning_rate: 1e-3,
            epochs: 5,
            minibatches: 4,
            steps_per_env: 24,
            num_envs: 64,
            iterations: 500,
            hidden_layers: vec![128, 128],
            init_log_std: 0.0,
            advantage_norm: true,
            checkpoint_interval: 100,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PpoError::Shape(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return Err(PpoError::Shape(format!("lam must be in [0, 1], got {}", self.lam)));
        }
        if !(self.clip_eps > 0.0) {
            return Err(PpoError::Shape(format!("clip_eps must be positive, got {}", self.clip_eps)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PpoError::Shape("learning_rate must be positive".into()));
        }
        if self.num_envs < 1 || self.steps_per_env < 1 || self.epochs < 1 || self.minibatches < 1 {
            return Err(PpoError::Shape(
                "num_envs, steps_per_env, epochs, and minibatches must all be >= 1".into(),
            ));
        }
        if self.minibatches as usize > (self.num_envs * self.steps_per_env) as usize {
            return Err(PpoError::Shape(
                "more minibatches than collected samples".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic per-stream seed derivation (splitmix64 over base ^ stream).
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
