//! Finite-difference verification of the PPO analytic gradients.
//!
//! Builds random small actor/critic pairs and minibatches, then compares
//! every parameter's reverse-mode gradient against a central difference of
//! the total loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{ppo_losses, MinibatchRef, PolicyGrads};
use super::mlp::{log_prob, sample_and_logprob, Activation, GaussianPolicy, Mlp, MlpGrads};
use super::{derive_seed, PpoConfig, PpoError};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub index: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub instances: Vec<GradCheckInstance>,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub pass: bool,
}

/// Check `instances` random network/minibatch pairs; passes when every
/// parameter agrees within `GRADCHECK_TOLERANCE` relative error
/// (absolute floor 1e-6).
pub fn run_gradcheck(instances: usize, seed: u64) -> Result<GradCheckReport, PpoError> {
    run_gradcheck_with_tamper(instances, seed, |_, _, _| {})
}

/// Variant with a gradient-tampering hook, used to prove the checker
/// actually detects wrong gradients.
pub fn run_gradcheck_with_tamper(
    instances: usize,
    seed: u64,
    tamper: impl Fn(usize, &mut PolicyGrads, &mut MlpGrads),
) -> Result<GradCheckReport, PpoError> {
    let mut reports = Vec::with_capacity(instances);
    for index in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
        let inst = check_instance(index, &mut rng, &tamper)?;
        reports.push(inst);
    }
    let (max_rel_error, worst_param) = reports
        .iter()
        .map(|r| (r.max_rel_error, r.worst_param.clone()))
        .fold((0.0, String::new()), |acc, cur| if cur.0 > acc.0 { cur } else { acc });
    Ok(GradCheckReport {
        tolerance: GRADCHECK_TOLERANCE,
        pass: max_rel_error < GRADCHECK_TOLERANCE,
        instances: reports,
        max_rel_error,
        worst_param,
    })
}

fn check_instance(
    index: usize,
    rng: &mut ChaCha8Rng,
    tamper: &impl Fn(usize, &mut PolicyGrads, &mut MlpGrads),
) -> Result<GradCheckInstance, PpoError> {
    let obs_dim = rng.random_range(3..=8);
    let act_dim = rng.random_range(2..=4);
    let hidden = rng.random_range(4..=8);
    let batch_size = 3;

    let mut actor = GaussianPolicy::new(obs_dim, &[hidden], act_dim, 0.0, rng);
    for ls in actor.log_std.iter_mut() {
        *ls = rng.random_range(-1.5..0.5);
    }
    // Full-scale last layer so the mean head is not near zero.
    let critic = Mlp::new(&[obs_dim, hidden, 1], Activation::Tanh, Activation::Linear, 1.0, rng);
    let actor = {
        let mut a = actor;
        let last = a.mlp.layers.len() - 1;
        for w in a.mlp.layers[last].weights.iter_mut() {
            *w *= 100.0 * rng.random_range(0.5..1.0);
        }
        a
    };

    let observations: Vec<f64> = (0..batch_size * obs_dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut actions = Vec::with_capacity(batch_size * act_dim);
    let mut old_log_probs = Vec::with_capacity(batch_size);
    for i in 0..batch_size {
        let (mean, std) = actor.forward(&observations[i * obs_dim..(i + 1) * obs_dim])?;
        let (action, _) = sample_and_logprob(&mean, &std, rng);
        // On-policy old log-probs keep the ratio at 1, inside the clip band
        // and away from the min/clip kinks that break finite differences.
        old_log_probs.push(log_prob(&mean, &std, &action));
        actions.extend_from_slice(&action);
    }
    let advantages: Vec<f64> = (0..batch_size).map(|_| rng.random_range(-2.0..2.0)).collect();
    let returns: Vec<f64> = (0..batch_size).map(|_| rng.random_range(-2.0..2.0)).collect();
    let batch = MinibatchRef {
        observations: &observations,
        actions: &actions,
        old_log_probs: &old_log_probs,
        advantages: &advantages,
        returns: &returns,
    };
    let config = PpoConfig {
        clip_eps: 0.2,
        value_coef: rng.random_range(0.3..1.5),
        entropy_coef: rng.random_range(0.001..0.02),
        ..PpoConfig::default()
    };

    let mut out = ppo_losses(&actor, &critic, &batch, &config)?;
    tamper(index, &mut out.actor_grads, &mut out.critic_grads);

    let mut analytic = Vec::new();
    out.actor_grads.flatten(&mut analytic);
    out.critic_grads.flatten(&mut analytic);

    let mut theta = Vec::new();
    actor.mlp.flatten_params(&mut theta);
    theta.extend_from_slice(&actor.log_std);
    let actor_param_count = theta.len();
    critic.flatten_params(&mut theta);

    let labels = param_labels(&actor, &critic);
    debug_assert_eq!(labels.len(), theta.len());
    debug_assert_eq!(analytic.len(), theta.len());

    let eval_loss = |flat: &[f64]| -> Result<f64, PpoError> {
        let mut a = actor.clone();
        let mut c = critic.clone();
        let mlp_count = a.mlp.param_count();
        a.mlp.set_params(&flat[..mlp_count])?;
        a.log_std.copy_from_slice(&flat[mlp_count..actor_param_count]);
        c.set_params(&flat[actor_param_count..])?;
        Ok(ppo_losses(&a, &c, &batch, &config)?.stats.total)
    };

    let mut max_rel_error = 0.0;
    let mut worst_param = String::new();
    let mut perturbed = theta.clone();
    for i in 0..theta.len() {
        let h = FD_STEP * theta[i].abs().max(1.0);
        perturbed[i] = theta[i] + h;
        let plus = eval_loss(&perturbed)?;
        perturbed[i] = theta[i] - h;
        let minus = eval_loss(&perturbed)?;
        perturbed[i] = theta[i];
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(ABS_FLOOR);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_param = labels[i].clone();
        }
    }
    Ok(GradCheckInstance {
        index,
        max_rel_error,
        worst_param,
    })
}

fn param_labels(actor: &GaussianPolicy, critic: &Mlp) -> Vec<String> {
    let mut labels = Vec::new();
    let push_mlp = |name: &str, mlp: &Mlp, labels: &mut Vec<String>| {
        for (l, layer) in mlp.layers.iter().enumerate() {
            for i in 0..layer.weights.len() {
                labels.push(format!("{name}/layer{l}/w[{i}]"));
            }
            for i in 0..layer.bias.len() {
                labels.push(format!("{name}/layer{l}/b[{i}]"));
            }
        }
    };
    push_mlp("actor", &actor.mlp, &mut labels);
    for i in 0..actor.log_std.len() {
        labels.push(format!("actor/log_std[{i}]"));
    }
    push_mlp("critic", critic, &mut labels);
    labels
}
