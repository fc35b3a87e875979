//! Deterministic policy evaluation: mean-action rollouts over fresh
//! episodes, reporting final distances and the reach rate at a tolerance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, ReachEnv, StepRecord};
use crate::kinematics::ArmModel;

use super::mlp::GaussianPolicy;
use super::train::TrainError;
use super::derive_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeEval {
    pub episode: usize,
    pub final_distance: f64,
    pub min_distance: f64,
    pub reached_in_time: bool,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeEval>,
    pub mean_final_distance: f64,
    /// Percentage of episodes with final distance within `eps_r` reached
    /// before the horizon expired.
    pub reach_rate_percent: f64,
    pub eps_r: f64,
}

/// Roll out `episodes` deterministic (mean-action) episodes. Each episode
/// uses a freshly seeded environment so reports are reproducible
/// independently of evaluation order. Optionally streams per-step records.
pub fn evaluate_policy(
    actor: &GaussianPolicy,
    env_config: &EnvConfig,
    model: &Arc<ArmModel>,
    episodes: usize,
    seed: u64,
    eps_r: f64,
    mut trace: Option<&mut dyn std::io::Write>,
) -> Result<EvalReport, TrainError> {
    let mut reports = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut env = ReachEnv::new(
            env_config.clone(),
            model.clone(),
            derive_seed(seed, episode as u64),
        )?;
        let mut min_distance = env.ee_distance()?;
        let mut total_reward = 0.0;
        let mut reached_in_time = false;
        loop {
            let obs = env.observation();
            let (mean, _) = actor.forward(obs.as_slice())?;
            let mut action = Action::zeros();
            action.0.copy_from_slice(&mean);
            let out = env.step(&action)?;
            total_reward += out.reward;
            let d = env.ee_distance()?;
            min_distance = min_distance.min(d);
            if d <= eps_r {
                reached_in_time = true;
            }
            if let Some(w) = trace.as_deref_mut() {
                let state = env.state();
                let record = StepRecord {
                    t: state.step,
                    q: state.q.0,
                    qdot: state.qdot,
                    action: state.a_prev,
                    reward: out.reward,
                    components: out.components,
                };
                serde_json::to_writer(&mut *w, &record)
                    .map_err(|e| TrainError::Io(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| TrainError::Io(e.to_string()))?;
            }
            if out.done {
                break;
            }
        }
        let final_distance = env.ee_distance()?;
        reports.push(EpisodeEval {
            episode,
            final_distance,
            min_distance,
            reached_in_time: reached_in_time && final_distance <= eps_r,
            total_reward,
        });
    }
    let mean_final_distance =
        reports.iter().map(|r| r.final_distance).sum::<f64>() / reports.len().max(1) as f64;
    let reach_rate_percent = 100.0
        * reports.iter().filter(|r| r.reached_in_time).count() as f64
        / reports.len().max(1) as f64;
    Ok(EvalReport {
        episodes: reports,
        mean_final_distance,
        reach_rate_percent,
        eps_r,
    })
}
