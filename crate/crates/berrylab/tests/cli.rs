//! End-to-end CLI tests against the built binary: command surfaces, file
//! outputs, exit codes, and seeded determinism.

use std::path::Path;
use std::process::{Command, Output};

fn berrylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_berrylab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn tiny_train_config() -> &'static str {
    "[ppo]\niterations = 3\nnum_envs = 4\nsteps_per_env = 6\nepochs = 2\nminibatches = 2\nhidden_layers = [16]\ncheckpoint_interval = 2\n\n[env]\nhorizon = 12\n"
}

#[test]
fn train_writes_checkpoints_curve_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(&config, tiny_train_config());
    let out_dir = dir.path().join("run");
    let output = berrylab(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(out_dir.join("checkpoint_000000.json").exists());
    assert!(out_dir.join("checkpoint_000002.json").exists());
    assert!(out_dir.join("policy_final.json").exists());
    assert!(out_dir.join("effective_config.toml").exists());
    let curve = std::fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4); // header + 3 iterations
    assert!(curve.starts_with("iteration,mean_reward,mean_final_distance"));

    // The config echo is itself a loadable config with the same effective
    // content.
    let echoed = std::fs::read_to_string(out_dir.join("effective_config.toml")).unwrap();
    let reparsed = berrylab::RootConfig::from_toml_str(&echoed).unwrap();
    assert_eq!(reparsed.to_toml_string().unwrap(), echoed);
}

#[test]
fn fixed_seed_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(&config, tiny_train_config());
    let mut curves = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        let output = berrylab(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "77",
        ]);
        assert!(output.status.success());
        curves.push(std::fs::read(out_dir.join("curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn eval_reports_one_record_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(&config, tiny_train_config());
    let out_dir = dir.path().join("run");
    assert!(berrylab(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let report_path = dir.path().join("report.json");
    let trace_path = dir.path().join("trace.jsonl");
    let output = berrylab(&[
        "eval",
        "--checkpoint",
        out_dir.join("policy_final.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--episodes",
        "1",
        "--out",
        report_path.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["episodes"].as_array().unwrap().len(), 1);
    assert!(report["mean_final_distance"].as_f64().unwrap() > 0.0);
    // Trace: one record per step of the 12-step horizon.
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    assert_eq!(trace.lines().count(), 12);
}

#[test]
fn simulate_produces_the_full_log_set() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    // Small nets and a short reach budget keep the untrained run quick.
    write(
        &config,
        "[ppo]\nhidden_layers = [16]\niterations = 0\n\n[streamer]\nreach_timeout_steps = 8\n",
    );
    let train_dir = dir.path().join("run");
    assert!(berrylab(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let stream = concat!(env!("CARGO_MANIFEST_DIR"), "/data/three_berries.jsonl");
    let sim_dir = dir.path().join("sim");
    let output = berrylab(&[
        "simulate",
        "--checkpoint",
        train_dir.join("policy_final.json").to_str().unwrap(),
        "--stream",
        stream,
        "--config",
        config.to_str().unwrap(),
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for file in [
        "targets.jsonl",
        "commands.jsonl",
        "audit.jsonl",
        "success_records.jsonl",
        "trajectory.csv",
        "metrics.csv",
        "summary.json",
        "effective_config.toml",
    ] {
        assert!(sim_dir.join(file).exists(), "{file} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sim_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["targets_planned"], 3);
    assert_eq!(summary["attempts"], 3);
    assert_eq!(summary["final_phase"], "done");
}

#[test]
fn analyze_reproduces_straight_line_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let mut text = String::from("t,x,y,z,segment_label\n");
    for i in 0..=80 {
        let t = 4.0 * i as f64 / 80.0;
        text.push_str(&format!("{t},{},0,0.4,approach\n", 0.25 * t));
    }
    for i in 0..=40 {
        let t = 4.05 + i as f64 * 0.05;
        text.push_str(&format!("{t},1.0,{},0.4,retreat\n", 0.1 * i as f64 * 0.05));
    }
    write(&csv_path, &text);
    let out_path = dir.path().join("metrics.csv");
    let output = berrylab(&[
        "analyze",
        "--trajectory",
        csv_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let metrics = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3); // header + approach + retreat
    let approach: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(approach[0], "approach");
    assert_eq!(approach[1], "1");
    let duration: f64 = approach[2].parse().unwrap();
    let straight: f64 = approach[4].parse().unwrap();
    let speed: f64 = approach[8].parse().unwrap();
    assert!((duration - 4.0).abs() < 1e-9);
    assert!((straight - 1.0).abs() < 1e-9);
    assert!((speed - 0.25).abs() < 1e-9);
}

#[test]
fn analyze_empty_csv_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("empty.csv");
    write(&csv_path, "t,x,y,z,segment_label\n");
    let out_path = dir.path().join("metrics.csv");
    let output = berrylab(&[
        "analyze",
        "--trajectory",
        csv_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let metrics = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(metrics.lines().count(), 1);
}

#[test]
fn malformed_rows_are_reported_with_line_numbers_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bad.csv");
    write(&csv_path, "t,x,y,z,segment_label\n0.0,0,0,0,a\nnot_a_number,0,0,0,a\n");
    let output = berrylab(&["analyze", "--trajectory", csv_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn invalid_config_exits_2_and_missing_file_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    write(&config, "[env]\ndt = -1.0\n");
    let output = berrylab(&["gradcheck", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("dt"));

    let output = berrylab(&["analyze", "--trajectory", "/nonexistent/file.csv"]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn gradcheck_cli_passes_and_is_deterministic() {
    let run = || {
        let output = berrylab(&["gradcheck", "--instances", "5", "--seed", "3"]);
        assert!(output.status.success());
        String::from_utf8(output.stdout).unwrap()
    };
    let a = run();
    assert!(a.contains("gradcheck PASS"));
    assert_eq!(a, run());
}

#[test]
fn checkpoint_shape_mismatch_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("bad_ck.json");
    // Valid JSON, wrong observation width for this build.
    let ck = serde_json::json!({
        "version": 1,
        "obs_dim": 7,
        "action_dim": 2,
        "layers": [{"in_dim": 7, "out_dim": 2, "activation": "linear"}],
        "weights": [vec![0.0; 14]],
        "biases": [[0.0, 0.0]],
        "log_std": [0.0, 0.0],
        "iteration": 0,
        "config_hash": "x",
    });
    write(&ck_path, &serde_json::to_string(&ck).unwrap());
    let output = berrylab(&["eval", "--checkpoint", ck_path.to_str().unwrap(), "--episodes", "1"]);
    assert_eq!(output.status.code(), Some(2));
}
