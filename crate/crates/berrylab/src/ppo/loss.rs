//! Clipped-surrogate PPO loss and its analytic gradients.

use rayon::prelude::*;

use super::mlp::{Cache, GaussianPolicy, Mlp, MlpGrads, LOG_STD_MAX, LOG_STD_MIN};
use super::{PpoConfig, PpoError};

/// Borrowed minibatch slices. Row counts are implied by `old_log_probs`;
/// `observations` and `actions` are flattened row-major.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchRef<'a> {
    pub observations: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl MinibatchRef<'_> {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    fn validate(&self, obs_dim: usize, act_dim: usize) -> Result<(), PpoError> {
        let b = self.len();
        if b == 0 {
            return Err(PpoError::Shape("empty minibatch".into()));
        }
        if self.observations.len() != b * obs_dim
            || self.actions.len() != b * act_dim
            || self.advantages.len() != b
            || self.returns.len() != b
        {
            return Err(PpoError::Shape(format!(
                "minibatch arrays disagree: {} rows, obs {} (expect {}), actions {} (expect {})",
                b,
                self.observations.len(),
                b * obs_dim,
                self.actions.len(),
                b * act_dim
            )));
        }
        Ok(())
    }
}

/// Scalar diagnostics of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Actor gradients: MLP layers plus the log-std head.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub mlp: MlpGrads,
    pub log_std: Vec<f64>,
}

impl PolicyGrads {
    pub fn zeros_like(policy: &GaussianPolicy) -> PolicyGrads {
        PolicyGrads {
            mlp: MlpGrads::zeros_like(&policy.mlp),
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    fn add_assign(&mut self, other: &PolicyGrads) {
        self.mlp.add_assign(&other.mlp);
        for (a, b) in self.log_std.iter_mut().zip(other.log_std.iter()) {
            *a += b;
        }
    }

    pub fn flatten(&self, out: &mut Vec<f64>) {
        self.mlp.flatten(out);
        out.extend_from_slice(&self.log_std);
    }
}

#[derive(Debug)]
pub struct PpoLossOutput {
    pub stats: LossStats,
    pub actor_grads: PolicyGrads,
    pub critic_grads: MlpGrads,
}

struct ChunkResult {
    actor_grads: PolicyGrads,
    critic_grads: MlpGrads,
    surrogate_sum: f64,
    value_sq_sum: f64,
    clipped_count: usize,
    kl_sum: f64,
}

/// Total loss `-mean(surrogate) + c_v * value_loss - c_e * entropy` with
/// gradients for every actor and critic parameter, accumulated by
/// reverse-mode passes through the dense layers.
///
/// Advantages are consumed as given (pre-normalize upstream if desired);
/// `old_log_probs` must come from collection time.
pub fn ppo_losses(
    actor: &GaussianPolicy,
    critic: &Mlp,
    batch: &MinibatchRef<'_>,
    config: &PpoConfig,
) -> Result<PpoLossOutput, PpoError> {
    let obs_dim = actor.mlp.input_dim();
    let act_dim = actor.action_dim();
    if critic.input_dim() != obs_dim || critic.output_dim() != 1 {
        return Err(PpoError::Shape(format!(
            "critic maps {} -> {}, expected {} -> 1",
            critic.input_dim(),
            critic.output_dim(),
            obs_dim
        )));
    }
    batch.validate(obs_dim, act_dim)?;

    let b = batch.len();
    let b_f = b as f64;
    let std = actor.std();
    let eps = config.clip_eps;

    // Fixed chunk split keeps the reduction order (and so the result)
    // independent of the thread count.
    let n_chunks = if b >= 64 { 8 } else { 1 };
    let chunk_size = b.div_ceil(n_chunks);
    let ranges: Vec<(usize, usize)> = (0..n_chunks)
        .map(|c| (c * chunk_size, ((c + 1) * chunk_size).min(b)))
        .filter(|(lo, hi)| lo < hi)
        .collect();

    let chunks: Vec<ChunkResult> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = ChunkResult {
                actor_grads: PolicyGrads::zeros_like(actor),
                critic_grads: MlpGrads::zeros_like(critic),
                surrogate_sum: 0.0,
                value_sq_sum: 0.0,
                clipped_count: 0,
                kl_sum: 0.0,
            };
            let mut actor_cache = Cache::default();
            let mut critic_cache = Cache::default();
            let mut d_mean = vec![0.0; act_dim];
            for i in lo..hi {
                let obs = &batch.observations[i * obs_dim..(i + 1) * obs_dim];
                let action = &batch.actions[i * act_dim..(i + 1) * act_dim];
                let advantage = batch.advantages[i];

                actor.mlp.forward_cached(obs, &mut actor_cache);
                let mean = actor_cache.activations.last().unwrap();

                let mut log_prob = 0.0;
                for j in 0..act_dim {
                    let z = (action[j] - mean[j]) / std[j];
                    log_prob += -0.5 * z * z - std[j].ln();
                }
                log_prob -= act_dim as f64 * 0.5 * (2.0 * std::f64::consts::PI).ln();

                let ratio = (log_prob - batch.old_log_probs[i]).exp();
                let unclipped = ratio * advantage;
                let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
                let surrogate = unclipped.min(clipped);
                out.surrogate_sum += surrogate;
                if clipped < unclipped {
                    out.clipped_count += 1;
                }
                out.kl_sum += batch.old_log_probs[i] - log_prob;

                // d(-mean surr)/d logp flows through the ratio only where the
                // unclipped branch is active.
                let d_logp = if unclipped <= clipped {
                    -(1.0 / b_f) * advantage * ratio
                } else {
                    0.0
                };
                if d_logp != 0.0 {
                    for j in 0..act_dim {
                        let diff = action[j] - mean[j];
                        let var = std[j] * std[j];
                        d_mean[j] = d_logp * diff / var;
                        out.actor_grads.log_std[j] += d_logp * (diff * diff / var - 1.0);
                    }
                    actor.mlp.backward(&actor_cache, &d_mean, &mut out.actor_grads.mlp);
                }

                critic.forward_cached(obs, &mut critic_cache);
                let value = critic_cache.activations.last().unwrap()[0];
                let err = value - batch.returns[i];
                out.value_sq_sum += err * err;
                let d_value = [config.value_coef * 2.0 * err / b_f];
                critic.backward(&critic_cache, &d_value, &mut out.critic_grads);
            }
            out
        })
        .collect();

    let mut actor_grads = PolicyGrads::zeros_like(actor);
    let mut critic_grads = MlpGrads::zeros_like(critic);
    let mut surrogate_sum = 0.0;
    let mut value_sq_sum = 0.0;
    let mut clipped_count = 0;
    let mut kl_sum = 0.0;
    for chunk in &chunks {
        actor_grads.add_assign(&chunk.actor_grads);
        critic_grads.add_assign(&chunk.critic_grads);
        surrogate_sum += chunk.surrogate_sum;
        value_sq_sum += chunk.value_sq_sum;
        clipped_count += chunk.clipped_count;
        kl_sum += chunk.kl_sum;
    }

    // Entropy is state-independent for a state-independent log-std; its
    // gradient lands directly on the log-std entries. Entries pinned by the
    // clamp receive no gradient at all since sigma is constant there.
    let entropy = actor.entropy();
    for (g, ls) in actor_grads.log_std.iter_mut().zip(actor.log_std.iter()) {
        if (LOG_STD_MIN..LOG_STD_MAX).contains(ls) {
            *g -= config.entropy_coef;
        } else {
            *g = 0.0;
        }
    }

    let policy_loss = -surrogate_sum / b_f;
    let value_loss = value_sq_sum / b_f;
    let total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy;
    if !total.is_finite() {
        return Err(PpoError::NonFinite(format!(
            "ppo loss (policy {policy_loss}, value {value_loss}, entropy {entropy})"
        )));
    }
    Ok(PpoLossOutput {
        stats: LossStats {
            total,
            policy_loss,
            value_loss,
            entropy,
            clip_fraction: clipped_count as f64 / b_f,
            approx_kl: kl_sum / b_f,
        },
        actor_grads,
        critic_grads,
    })
}
