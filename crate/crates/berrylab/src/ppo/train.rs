//! Training loop: parallel rollout collection, GAE, and epochs of
//! minibatched clipped-surrogate updates.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvConfig, EnvError, ReachEnv, ACTION_DIM, OBS_DIM};
use crate::kinematics::ArmModel;

use super::adam::Adam;
use super::loss::{ppo_losses, MinibatchRef};
use super::mlp::{sample_and_logprob, Activation, GaussianPolicy, Mlp};
use super::rollout::{compute_gae, RolloutBuffer};
use super::{derive_seed, PpoConfig, PpoError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error("non-finite values detected at iteration {iteration}")]
    NonFinite { iteration: u32 },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Per-iteration learning-curve record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    /// Mean return of episodes completed during this iteration.
    pub mean_reward: f64,
    /// Mean end-effector-to-command distance at the ends of those episodes.
    pub mean_final_distance: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub episodes_completed: u32,
}

struct EnvSlot {
    env: ReachEnv,
    action_rng: ChaCha8Rng,
    episode_return: f64,
}

struct SlotRollout {
    observations: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    episode_returns: Vec<f64>,
    final_distances: Vec<f64>,
    last_distance: f64,
}

pub struct Trainer {
    slots: Vec<EnvSlot>,
    actor: GaussianPolicy,
    critic: Mlp,
    adam_actor: Adam,
    adam_critic: Adam,
    ppo: PpoConfig,
    shuffle_rng: ChaCha8Rng,
    iteration: u32,
}

impl Trainer {
    pub fn new(
        env_config: EnvConfig,
        ppo: PpoConfig,
        model: Arc<ArmModel>,
        seed: u64,
    ) -> Result<Trainer, TrainError> {
        ppo.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        let mut actor = GaussianPolicy::new(
            OBS_DIM,
            &ppo.hidden_layers,
            ACTION_DIM,
            ppo.init_log_std,
            &mut init_rng,
        );
        let mut critic_dims = vec![OBS_DIM];
        critic_dims.extend_from_slice(&ppo.hidden_layers);
        critic_dims.push(1);
        let mut critic =
            Mlp::new(&critic_dims, Activation::Tanh, Activation::Linear, 1.0, &mut init_rng);
        // Xavier assumes unit-scale inputs; joint velocities swing over a
        // several-rad/s range, so shrink their first-layer columns at init.
        let mut scales = [1.0; OBS_DIM];
        for i in crate::env::OBS_QDOT {
            scales[i] = 1.0 / 3.0;
        }
        for net in [&mut actor.mlp, &mut critic] {
            let first = &mut net.layers[0];
            for row in 0..first.out_dim {
                for (col, scale) in scales.iter().enumerate() {
                    first.weights[row * first.in_dim + col] *= scale;
                }
            }
        }

        let n = ppo.num_envs as usize;
        let horizon = env_config.horizon;
        let mut slots = Vec::with_capacity(n);
        for i in 0..n {
            let env = ReachEnv::new(
                env_config.clone(),
                model.clone(),
                derive_seed(seed, 2 * i as u64),
            )?;
            slots.push(EnvSlot {
                env,
                action_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * i as u64 + 1)),
                episode_return: 0.0,
            });
        }
        // Stagger episode phases with zero-action warmup steps so episode
        // terminations (and the stats derived from them) spread across
        // iterations instead of arriving in bursts every horizon/T iterations.
        for (i, slot) in slots.iter_mut().enumerate() {
            let offset = (i as u64 * horizon as u64 / n as u64) as u32;
            for _ in 0..offset {
                let out = slot.env.step(&Action::zeros())?;
                slot.episode_return += out.reward;
            }
        }

        let actor_params = actor.mlp.param_count() + actor.log_std.len();
        let critic_params = critic.param_count();
        Ok(Trainer {
            slots,
            adam_actor: Adam::new(ppo.learning_rate, actor_params),
            adam_critic: Adam::new(ppo.learning_rate, critic_params),
            actor,
            critic,
            ppo,
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX - 1)),
            iteration: 0,
        })
    }

    pub fn actor(&self) -> &GaussianPolicy {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn config(&self) -> &PpoConfig {
        &self.ppo
    }

    /// Collect one rollout, compute advantages, and run the minibatched
    /// update epochs. Returns the iteration's learning-curve record.
    pub fn run_iteration(&mut self) -> Result<IterationStats, TrainError> {
        self.iteration += 1;
        let iteration = self.iteration;
        let (buffer, rollouts) = self.collect()?;

        let mut advantage = compute_gae(&buffer, self.ppo.gamma, self.ppo.lam)?;
        if self.ppo.advantage_norm {
            advantage.normalize();
        }

        let total = buffer.len();
        let minibatch_size = total.div_ceil(self.ppo.minibatches as usize);
        let mut indices: Vec<usize> = (0..total).collect();
        let mut scratch = MinibatchScratch::with_capacity(minibatch_size);
        let mut flat_params = Vec::new();
        let mut flat_grads = Vec::new();

        let mut loss_acc = [0.0; 4];
        let mut updates = 0u32;
        for _ in 0..self.ppo.epochs {
            indices.shuffle(&mut self.shuffle_rng);
            for chunk in indices.chunks(minibatch_size) {
                scratch.gather(&buffer, &advantage.advantages, &advantage.returns, chunk);
                let batch = scratch.as_ref();
                let out = ppo_losses(&self.actor, &self.critic, &batch, &self.ppo)
                    .map_err(|e| match e {
                        PpoError::NonFinite(_) => TrainError::NonFinite { iteration },
                        other => TrainError::Ppo(other),
                    })?;

                flat_params.clear();
                self.actor.mlp.flatten_params(&mut flat_params);
                flat_params.extend_from_slice(&self.actor.log_std);
                flat_grads.clear();
                out.actor_grads.flatten(&mut flat_grads);
                self.adam_actor.step(&mut flat_params, &flat_grads)?;
                let mlp_count = self.actor.mlp.param_count();
                self.actor.mlp.set_params(&flat_params[..mlp_count])?;
                self.actor.log_std.copy_from_slice(&flat_params[mlp_count..]);

                flat_params.clear();
                self.critic.flatten_params(&mut flat_params);
                flat_grads.clear();
                out.critic_grads.flatten(&mut flat_grads);
                self.adam_critic.step(&mut flat_params, &flat_grads)?;
                self.critic.set_params(&flat_params)?;

                loss_acc[0] += out.stats.policy_loss;
                loss_acc[1] += out.stats.value_loss;
                loss_acc[2] += out.stats.entropy;
                loss_acc[3] += out.stats.total;
                updates += 1;
            }
        }
        if !self.actor.mlp.all_finite()
            || !self.critic.all_finite()
            || self.actor.log_std.iter().any(|v| !v.is_finite())
        {
            return Err(TrainError::NonFinite { iteration });
        }

        let episode_returns: Vec<f64> = rollouts.iter().flat_map(|r| r.episode_returns.iter().copied()).collect();
        let final_distances: Vec<f64> = rollouts.iter().flat_map(|r| r.final_distances.iter().copied()).collect();
        let episodes_completed = episode_returns.len() as u32;
        // Fall back to the fleet's current distances when no episode ended
        // within the window (possible for tiny test configurations).
        let mean_final_distance = if final_distances.is_empty() {
            rollouts.iter().map(|r| r.last_distance).sum::<f64>() / rollouts.len() as f64
        } else {
            final_distances.iter().sum::<f64>() / final_distances.len() as f64
        };
        let mean_reward = if episode_returns.is_empty() {
            f64::NAN
        } else {
            episode_returns.iter().sum::<f64>() / episode_returns.len() as f64
        };
        let updates_f = updates.max(1) as f64;
        Ok(IterationStats {
            iteration,
            mean_reward,
            mean_final_distance,
            policy_loss: loss_acc[0] / updates_f,
            value_loss: loss_acc[1] / updates_f,
            entropy: loss_acc[2] / updates_f,
            total_loss: loss_acc[3] / updates_f,
            episodes_completed,
        })
    }

    fn collect(&mut self) -> Result<(RolloutBuffer, Vec<SlotRollout>), TrainError> {
        let t_steps = self.ppo.steps_per_env as usize;
        let n_envs = self.slots.len();
        let actor = &self.actor;
        let critic = &self.critic;
        let gamma = self.ppo.gamma;
        let rollouts: Vec<Result<SlotRollout, TrainError>> = self
            .slots
            .par_iter_mut()
            .map(|slot| collect_slot(slot, actor, critic, t_steps, gamma))
            .collect();
        let mut buffer = RolloutBuffer::new(t_steps, n_envs);
        let mut collected = Vec::with_capacity(n_envs);
        for (env_idx, result) in rollouts.into_iter().enumerate() {
            let rollout = result?;
            for t in 0..t_steps {
                buffer.record(
                    t,
                    env_idx,
                    &rollout.observations[t * OBS_DIM..(t + 1) * OBS_DIM],
                    &rollout.actions[t * ACTION_DIM..(t + 1) * ACTION_DIM],
                    rollout.log_probs[t],
                    rollout.rewards[t],
                    rollout.values[t],
                    rollout.dones[t],
                );
            }
            buffer.bootstrap_values[env_idx] = rollout.bootstrap;
            collected.push(rollout);
        }
        buffer.mark_filled();
        Ok((buffer, collected))
    }
}

fn collect_slot(
    slot: &mut EnvSlot,
    actor: &GaussianPolicy,
    critic: &Mlp,
    t_steps: usize,
    gamma: f64,
) -> Result<SlotRollout, TrainError> {
    let mut out = SlotRollout {
        observations: Vec::with_capacity(t_steps * OBS_DIM),
        actions: Vec::with_capacity(t_steps * ACTION_DIM),
        log_probs: Vec::with_capacity(t_steps),
        rewards: Vec::with_capacity(t_steps),
        values: Vec::with_capacity(t_steps),
        dones: Vec::with_capacity(t_steps),
        bootstrap: 0.0,
        episode_returns: Vec::new(),
        final_distances: Vec::new(),
        last_distance: 0.0,
    };
    for _ in 0..t_steps {
        let obs = slot.env.observation();
        let (mean, std) = actor.forward(obs.as_slice())?;
        let (action, log_prob) = sample_and_logprob(&mean, &std, &mut slot.action_rng);
        let value = critic.forward(obs.as_slice())[0];
        let mut act = Action::zeros();
        act.0.copy_from_slice(&action);
        let step = slot.env.step(&act)?;
        slot.episode_return += step.reward;
        out.observations.extend_from_slice(obs.as_slice());
        out.actions.extend_from_slice(&action);
        out.log_probs.push(log_prob);
        out.values.push(value);
        out.dones.push(step.done);
        let mut reward = step.reward;
        if step.done {
            // Fixed-horizon episodes end by timeout, not by reaching an
            // absorbing state; fold the bootstrap value of the terminal
            // observation into the last reward so the value target stays
            // stationary (the done flag still cuts the GAE recursion).
            reward += gamma * critic.forward(step.obs.as_slice())[0];
            out.final_distances.push(slot.env.ee_distance()?);
            out.episode_returns.push(slot.episode_return);
            slot.episode_return = 0.0;
            slot.env.reset()?;
        }
        out.rewards.push(reward);
    }
    out.bootstrap = critic.forward(slot.env.observation().as_slice())[0];
    out.last_distance = slot.env.ee_distance()?;
    Ok(out)
}

struct MinibatchScratch {
    observations: Vec<f64>,
    actions: Vec<f64>,
    old_log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl MinibatchScratch {
    fn with_capacity(n: usize) -> MinibatchScratch {
        MinibatchScratch {
            observations: Vec::with_capacity(n * OBS_DIM),
            actions: Vec::with_capacity(n * ACTION_DIM),
            old_log_probs: Vec::with_capacity(n),
            advantages: Vec::with_capacity(n),
            returns: Vec::with_capacity(n),
        }
    }

    fn gather(
        &mut self,
        buffer: &RolloutBuffer,
        advantages: &[f64],
        returns: &[f64],
        indices: &[usize],
    ) {
        self.observations.clear();
        self.actions.clear();
        self.old_log_probs.clear();
        self.advantages.clear();
        self.returns.clear();
        for &idx in indices {
            self.observations.extend_from_slice(buffer.obs_at(idx));
            self.actions.extend_from_slice(buffer.action_at(idx));
            self.old_log_probs.push(buffer.log_probs[idx]);
            self.advantages.push(advantages[idx]);
            self.returns.push(returns[idx]);
        }
    }

    fn as_ref(&self) -> MinibatchRef<'_> {
        MinibatchRef {
            observations: &self.observations,
            actions: &self.actions,
            old_log_probs: &self.old_log_probs,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub actor: GaussianPolicy,
    pub critic: Mlp,
    pub curve: Vec<IterationStats>,
}

/// Convenience driver: run `ppo.iterations` iterations and return the final
/// parameters with the learning curve. Zero iterations returns the freshly
/// initialized parameters and an empty curve.
pub fn train(
    env_config: &EnvConfig,
    ppo: &PpoConfig,
    model: Arc<ArmModel>,
    seed: u64,
) -> Result<TrainOutput, TrainError> {
    let mut trainer = Trainer::new(env_config.clone(), ppo.clone(), model, seed)?;
    let mut curve = Vec::with_capacity(ppo.iterations as usize);
    for _ in 0..ppo.iterations {
        curve.push(trainer.run_iteration()?);
    }
    Ok(TrainOutput {
        actor: trainer.actor,
        critic: trainer.critic,
        curve,
    })
}
