//! Dev utility: roll out a checkpoint with mean actions and print the
//! distance trace, to see whether the policy converges, oscillates, or
//! settles off-target.
//!
//! Run: `cargo run --example rollout_probe -p berrylab -- <checkpoint> [episodes]`

use std::sync::Arc;

use berrylab::checkpoint::PolicyCheckpoint;
use berrylab::config::RootConfig;
use berrylab::env::{Action, ReachEnv};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ck_path = args.get(1).expect("usage: rollout_probe <checkpoint> [episodes]");
    let episodes: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let config = RootConfig::default();
    let model = Arc::new(config.validate().unwrap());
    let actor = PolicyCheckpoint::load(ck_path).unwrap().into_policy().unwrap();

    for ep in 0..episodes {
        let mut env = ReachEnv::new(config.env.clone(), model.clone(), 1000 + ep as u64).unwrap();
        env.reset().unwrap();
        let mut trace = Vec::new();
        let mut action_delta = 0.0;
        let mut prev_action: Option<Vec<f64>> = None;
        loop {
            let obs = env.observation();
            let (mean, _) = actor.forward(obs.as_slice()).unwrap();
            if let Some(prev) = &prev_action {
                if env.state().step >= 200 {
                    action_delta += mean
                        .iter()
                        .zip(prev.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                }
            }
            prev_action = Some(mean.clone());
            let mut act = Action::zeros();
            act.0.copy_from_slice(&mean);
            let out = env.step(&act).unwrap();
            trace.push(env.ee_distance().unwrap());
            if out.done {
                break;
            }
        }
        let sampled: Vec<String> = [0usize, 5, 10, 20, 40, 80, 120, 180, 239]
            .iter()
            .map(|&i| format!("{:.3}", trace[i.min(trace.len() - 1)]))
            .collect();
        let tail_min = trace[200..].iter().cloned().fold(f64::INFINITY, f64::min);
        let tail_max = trace[200..].iter().cloned().fold(0.0f64, f64::max);
        println!(
            "ep {ep}: d[0,5,10,20,40,80,120,180,239] = {}  tail min/max = {:.4}/{:.4}  mean |da|/step(tail) = {:.4}",
            sampled.join(" "),
            tail_min,
            tail_max,
            action_delta / 39.0
        );
    }
}
