//! Dev utility: print tool poses for candidate home configurations and the
//! reachable-position envelope under clamped actions, to size the default
//! workspace box.
//!
//! Run: `cargo run --example workspace_probe -p berrylab`

use berrylab::config::default_arm_model;
use berrylab::kinematics::{forward_kinematics, JointVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let model = default_arm_model().unwrap();
    let pi = std::f64::consts::PI;
    let candidates: Vec<[f64; 6]> = vec![
        [0.0, -pi / 2.0, pi / 2.0, -pi / 2.0, -pi / 2.0, 0.0],
        [0.0, -pi / 2.0, -pi / 2.0, -pi / 2.0, pi / 2.0, 0.0],
        [0.0, -2.0, 2.0, -pi / 2.0, -pi / 2.0, 0.0],
        [0.0, -1.2, 1.6, -1.97, -pi / 2.0, 0.0],
        [0.0, -1.57, 1.4, -1.4, -pi / 2.0, 0.0],
        [pi / 2.0, -pi / 2.0, pi / 2.0, -pi / 2.0, -pi / 2.0, 0.0],
    ];
    for q in &candidates {
        let pose = forward_kinematics(&model, &JointVector(*q)).unwrap();
        let tool_z = pose.orientation * nalgebra::Vector3::z();
        println!(
            "q={q:?} -> pos=({:+.3}, {:+.3}, {:+.3}) tool_z=({:+.2}, {:+.2}, {:+.2})",
            pose.position.x, pose.position.y, pose.position.z, tool_z.x, tool_z.y, tool_z.z
        );
    }

    // Envelope of positions reachable with q_default + 0.5 * a, |a| <= 1.
    let q_default = model.q_default();
    let scale = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut positions = Vec::new();
    for _ in 0..200_000 {
        let mut q = q_default;
        for i in 0..6 {
            q.0[i] += scale * rng.random_range(-1.0..1.0);
        }
        positions.push(forward_kinematics(&model, &q).unwrap().position);
    }
    for axis in 0..3 {
        let mut vals: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pct = |q: f64| vals[((vals.len() - 1) as f64 * q) as usize];
        println!(
            "axis {axis}: min {:+.3} p02 {:+.3} p10 {:+.3} p25 {:+.3} p50 {:+.3} p75 {:+.3} p90 {:+.3} p98 {:+.3} max {:+.3}",
            pct(0.0), pct(0.02), pct(0.10), pct(0.25), pct(0.50), pct(0.75), pct(0.90), pct(0.98), pct(1.0)
        );
    }
    let home = forward_kinematics(&model, &q_default).unwrap();
    println!("home position: ({:+.4}, {:+.4}, {:+.4})", home.position.x, home.position.y, home.position.z);
}
