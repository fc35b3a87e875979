//! Rollout storage for T steps across N parallel environments, and
//! generalized advantage estimation over it.
//!
//! All per-step arrays share the `(T, N)` layout, flattened row-major as
//! `index = t * n_envs + env`.

use crate::env::{ACTION_DIM, OBS_DIM};

use super::PpoError;

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub t_steps: usize,
    pub n_envs: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value estimate of the observation after the final collected step,
    /// one per environment.
    pub bootstrap_values: Vec<f64>,
    filled: bool,
}

impl RolloutBuffer {
    pub fn new(t_steps: usize, n_envs: usize) -> RolloutBuffer {
        let n = t_steps * n_envs;
        RolloutBuffer {
            t_steps,
            n_envs,
            observations: vec![0.0; n * OBS_DIM],
            actions: vec![0.0; n * ACTION_DIM],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            bootstrap_values: vec![0.0; n_envs],
            filled: false,
        }
    }

    #[inline]
    pub fn flat_index(&self, t: usize, env: usize) -> usize {
        debug_assert!(t < self.t_steps && env < self.n_envs);
        t * self.n_envs + env
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        t: usize,
        env: usize,
        obs: &[f64],
        action: &[f64],
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
    ) {
        let idx = self.flat_index(t, env);
        self.observations[idx * OBS_DIM..(idx + 1) * OBS_DIM].copy_from_slice(obs);
        self.actions[idx * ACTION_DIM..(idx + 1) * ACTION_DIM].copy_from_slice(action);
        self.log_probs[idx] = log_prob;
        self.rewards[idx] = reward;
        self.values[idx] = value;
        self.dones[idx] = done;
    }

    pub fn obs_at(&self, idx: usize) -> &[f64] {
        &self.observations[idx * OBS_DIM..(idx + 1) * OBS_DIM]
    }

    pub fn action_at(&self, idx: usize) -> &[f64] {
        &self.actions[idx * ACTION_DIM..(idx + 1) * ACTION_DIM]
    }

    pub fn mark_filled(&mut self) {
        self.filled = true;
    }

    pub fn is_filled(&self) -> bool {
        self.filled
    }

    pub fn len(&self) -> usize {
        self.t_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Advantages and returns, `(T, N)` flattened like the buffer, plus the
/// normalization statistics applied to the advantages (if any).
#[derive(Debug, Clone)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub norm_mean: Option<f64>,
    pub norm_std: Option<f64>,
}

impl AdvantageSet {
    /// Standardize advantages to zero mean / unit std over the whole batch,
    /// recording the statistics used.
    pub fn normalize(&mut self) {
        let n = self.advantages.len();
        if n == 0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        for a in self.advantages.iter_mut() {
            *a = (*a - mean) / (std + 1e-8);
        }
        self.norm_mean = Some(mean);
        self.norm_std = Some(std);
    }
}

/// GAE over the buffer: `A_t = sum_l (gamma*lambda)^l delta_{t+l}` truncated
/// at episode ends, computed by the standard backward recursion; returns are
/// `A_t + V(o_t)`. Done flags zero out the bootstrap across episode ends.
pub fn compute_gae(
    buffer: &RolloutBuffer,
    gamma: f64,
    lam: f64,
) -> Result<AdvantageSet, PpoError> {
    if !buffer.is_filled() {
        return Err(PpoError::UnfilledBuffer);
    }
    let (t_steps, n_envs) = (buffer.t_steps, buffer.n_envs);
    let mut advantages = vec![0.0; t_steps * n_envs];
    let mut returns = vec![0.0; t_steps * n_envs];
    for env in 0..n_envs {
        let mut gae = 0.0;
        for t in (0..t_steps).rev() {
            let idx = t * n_envs + env;
            let not_done = if buffer.dones[idx] { 0.0 } else { 1.0 };
            let next_value = if t + 1 == t_steps {
                buffer.bootstrap_values[env]
            } else {
                buffer.values[(t + 1) * n_envs + env]
            };
            let delta = buffer.rewards[idx] + gamma * next_value * not_done - buffer.values[idx];
            gae = delta + gamma * lam * not_done * gae;
            advantages[idx] = gae;
            returns[idx] = gae + buffer.values[idx];
        }
    }
    Ok(AdvantageSet {
        advantages,
        returns,
        norm_mean: None,
        norm_std: None,
    })
}
