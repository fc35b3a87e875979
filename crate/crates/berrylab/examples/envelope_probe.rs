//! Dev utility: for sampled pose commands, find the best constant action by
//! local search and report the achievable steady-state position/orientation
//! errors inside the clamped action envelope.
//!
//! Run: `cargo run --example envelope_probe -p berrylab`

use berrylab::config::default_arm_model;
use berrylab::env::{command_nominal_orientation, sample_command, EnvConfig};
use berrylab::kinematics::{forward_kinematics, orientation_error, JointVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let model = default_arm_model().unwrap();
    let config = EnvConfig::default();
    let nominal = command_nominal_orientation(&config, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let cost = |a: &[f64; 6], target: &berrylab::env::PoseCommand, w_ori: f64| -> (f64, f64, f64) {
        let mut q = model.q_default();
        for i in 0..6 {
            q.0[i] += config.action_scale * a[i].clamp(-1.0, 1.0);
        }
        let pose = forward_kinematics(&model, &q).unwrap();
        let d = (pose.position - target.position).norm();
        let dth = orientation_error(&pose.orientation, &target.orientation).unwrap();
        (d + w_ori * dth, d, dth)
    };

    for w_ori in [0.0, 0.5] {
        let mut worst_d = 0.0f64;
        let mut sum_d = 0.0;
        let mut sum_th = 0.0;
        let n = 40;
        for _ in 0..n {
            let cmd = sample_command(&mut rng, &config, &model).unwrap();
            // Coordinate-descent local search from several starts.
            let mut best = ([0.0; 6], f64::INFINITY, 0.0, 0.0);
            for start in 0..4 {
                let mut a = [0.0; 6];
                if start > 0 {
                    for v in a.iter_mut() {
                        *v = rng.random_range(-0.8..0.8);
                    }
                }
                let mut step = 0.25;
                let (mut c, mut d, mut th) = cost(&a, &cmd, w_ori);
                while step > 1e-5 {
                    let mut improved = false;
                    for i in 0..6 {
                        for delta in [step, -step] {
                            let mut trial = a;
                            trial[i] = (trial[i] + delta).clamp(-1.0, 1.0);
                            let (tc, td, tth) = cost(&trial, &cmd, w_ori);
                            if tc < c {
                                a = trial;
                                c = tc;
                                d = td;
                                th = tth;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
                if c < best.1 {
                    best = (a, c, d, th);
                }
            }
            sum_d += best.2;
            sum_th += best.3;
            worst_d = worst_d.max(best.2);
        }
        println!(
            "w_ori {w_ori}: mean achievable d = {:.4} m (worst {:.4}), mean dtheta = {:.4} rad over {n} commands",
            sum_d / n as f64,
            worst_d,
            sum_th / n as f64
        );
    }
    let _ = nominal;
}
