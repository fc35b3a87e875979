//! Command-line surface: train, eval, simulate, analyze, gradcheck.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric abort, 4 i/o error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use berrylab::checkpoint::{CheckpointError, PolicyCheckpoint};
use berrylab::config::{ConfigError, RootConfig};
use berrylab::env::{ACTION_DIM, OBS_DIM};
use berrylab::io::{read_jsonl, write_jsonl, JsonlError};
use berrylab::metrics::{
    analyze_log, read_trajectory_csv, write_trajectory_csv, LabelSummary, MetricsError,
};
use berrylab::perception::DetectionRecord;
use berrylab::ppo::{
    evaluate_policy, run_gradcheck, train::TrainError, GradCheckReport, PpoError, Trainer,
};
use berrylab::sim::{run_simulation, SimError};

#[derive(Parser)]
#[command(
    name = "berrylab",
    about = "Desk-scale harvesting lab: PPO reach training, perception-to-target pipeline, closed-loop simulation, and motion analytics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reaching policy and write checkpoints plus a learning curve.
    Train {
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints, curve.csv, and the config echo.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint with deterministic mean actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Report JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional per-step rollout trace (line-delimited JSON).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Closed-loop run: detection stream -> targets -> harvest phases -> logs.
    Simulate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Detection stream (line-delimited JSON records).
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-segment motion metrics from a trajectory CSV.
    Analyze {
        /// CSV with header t,x,y,z,segment_label.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Metrics CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference verification of the PPO gradients.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Report JSON path (stdout summary always printed).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Train(TrainError),
    Checkpoint(CheckpointError),
    Metrics(MetricsError),
    Jsonl(JsonlError),
    Sim(SimError),
    Io(std::io::Error),
    GradcheckFailed { max_rel_error: f64, worst: String },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Train(e) => write!(f, "{e}"),
            CliError::Checkpoint(e) => write!(f, "{e}"),
            CliError::Metrics(e) => write!(f, "{e}"),
            CliError::Jsonl(e) => write!(f, "{e}"),
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::GradcheckFailed { max_rel_error, worst } => {
                write!(f, "gradcheck failed: max relative error {max_rel_error:.3e} at {worst}")
            }
        }
    }
}

macro_rules! cli_from {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::$variant(e)
            }
        }
    };
}
cli_from!(Config, ConfigError);
cli_from!(Train, TrainError);
cli_from!(Checkpoint, CheckpointError);
cli_from!(Metrics, MetricsError);
cli_from!(Jsonl, JsonlError);
cli_from!(Sim, SimError);
cli_from!(Io, std::io::Error);

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Io(_)) => 4,
            CliError::Config(_) => 2,
            CliError::Train(TrainError::NonFinite { .. }) => 3,
            CliError::Train(TrainError::Ppo(PpoError::NonFinite(_))) => 3,
            CliError::Train(TrainError::Io(_)) => 4,
            CliError::Train(_) => 2,
            CliError::Checkpoint(CheckpointError::Io(_)) => 4,
            CliError::Checkpoint(_) => 2,
            CliError::Metrics(MetricsError::Io(_)) => 4,
            CliError::Metrics(_) => 2,
            CliError::Jsonl(JsonlError::Io(_)) => 4,
            CliError::Jsonl(_) => 2,
            CliError::Sim(SimError::Ppo(PpoError::NonFinite(_))) => 3,
            CliError::Sim(_) => 2,
            CliError::Io(_) => 4,
            CliError::GradcheckFailed { .. } => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RootConfig, CliError> {
    let mut config = match path {
        Some(p) => RootConfig::load(p)?,
        None => RootConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
        config.validate()?;
    }
    Ok(config)
}

fn echo_config(config: &RootConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("effective_config.toml"), config.to_toml_string()?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, out, seed } => cmd_train(&load_config(&config, seed)?, &out),
        Command::Eval { checkpoint, config, episodes, out, seed, trace } => {
            cmd_eval(&checkpoint, &load_config(&config, seed)?, episodes, out.as_deref(), trace.as_deref())
        }
        Command::Simulate { checkpoint, stream, config, out, seed } => {
            cmd_simulate(&checkpoint, &stream, &load_config(&config, seed)?, &out)
        }
        Command::Analyze { trajectory, config, out, seed } => {
            cmd_analyze(&trajectory, &load_config(&config, seed)?, out.as_deref())
        }
        Command::Gradcheck { config, instances, out, seed } => {
            cmd_gradcheck(&load_config(&config, seed)?, instances, out.as_deref())
        }
    }
}

fn checkpoint_path(dir: &Path, iteration: u32) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:06}.json"))
}

fn cmd_train(config: &RootConfig, out: &Path) -> Result<(), CliError> {
    let model = Arc::new(config.validate()?);
    echo_config(config, out)?;
    let config_hash = config.hash()?;
    let mut trainer = Trainer::new(config.env.clone(), config.ppo.clone(), model, config.seed)?;

    PolicyCheckpoint::from_policy(trainer.actor(), 0, config_hash.clone())
        .save(checkpoint_path(out, 0))?;

    let curve_path = out.join("curve.csv");
    let mut curve = BufWriter::new(File::create(&curve_path)?);
    writeln!(
        curve,
        "iteration,mean_reward,mean_final_distance,policy_loss,value_loss,entropy,total_loss,episodes_completed"
    )?;

    let interval = config.ppo.checkpoint_interval;
    let iterations = config.ppo.iterations;
    for _ in 0..iterations {
        let stats = trainer.run_iteration()?;
        writeln!(
            curve,
            "{},{},{},{},{},{},{},{}",
            stats.iteration,
            stats.mean_reward,
            stats.mean_final_distance,
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.total_loss,
            stats.episodes_completed
        )?;
        if stats.iteration % 25 == 0 || stats.iteration == iterations {
            curve.flush()?;
            println!(
                "iter {:>5}/{} mean_reward {:>10.3} mean_final_distance {:.4} entropy {:.3}",
                stats.iteration,
                iterations,
                stats.mean_reward,
                stats.mean_final_distance,
                stats.entropy
            );
        }
        if interval > 0 && stats.iteration % interval == 0 {
            PolicyCheckpoint::from_policy(trainer.actor(), stats.iteration, config_hash.clone())
                .save(checkpoint_path(out, stats.iteration))?;
        }
    }
    curve.flush()?;
    let final_ck = PolicyCheckpoint::from_policy(trainer.actor(), iterations, config_hash);
    final_ck.save(out.join("policy_final.json"))?;
    println!("wrote {} and {}", curve_path.display(), out.join("policy_final.json").display());
    Ok(())
}

fn load_actor(path: &Path) -> Result<berrylab::ppo::GaussianPolicy, CliError> {
    let ck = PolicyCheckpoint::load(path)?;
    if ck.obs_dim != OBS_DIM || ck.action_dim != ACTION_DIM {
        return Err(CliError::Checkpoint(CheckpointError::Shape(format!(
            "checkpoint is {}->{}, this build expects {OBS_DIM}->{ACTION_DIM}",
            ck.obs_dim, ck.action_dim
        ))));
    }
    Ok(ck.into_policy()?)
}

fn cmd_eval(
    checkpoint: &Path,
    config: &RootConfig,
    episodes: usize,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Config(ConfigError::Validation("episodes must be >= 1".into())));
    }
    let model = Arc::new(config.validate()?);
    let actor = load_actor(checkpoint)?;
    let mut trace_file = match trace {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let report = evaluate_policy(
        &actor,
        &config.env,
        &model,
        episodes,
        config.seed,
        config.metrics.reach_eps,
        trace_file.as_mut().map(|w| w as &mut dyn Write),
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    match out {
        Some(p) => std::fs::write(p, &json)?,
        None => println!("{json}"),
    }
    println!(
        "episodes {}  mean_final_distance {:.4} m  reach_rate {:.1}% at eps {:.3} m",
        report.episodes.len(),
        report.mean_final_distance,
        report.reach_rate_percent,
        report.eps_r
    );
    Ok(())
}

fn write_summary_csv(mut writer: impl Write, rows: &[LabelSummary]) -> Result<(), CliError> {
    writeln!(
        writer,
        "segment,count,duration_mean,duration_std,straight_mean,straight_std,length_mean,length_std,speed_mean,speed_std,rms_jerk_mean,rms_jerk_std,peak_jerk_mean,peak_jerk_std"
    )?;
    for r in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.count,
            r.duration_mean,
            r.duration_std,
            r.straight_mean,
            r.straight_std,
            r.length_mean,
            r.length_std,
            r.speed_mean,
            r.speed_std,
            r.rms_jerk_mean,
            r.rms_jerk_std,
            r.peak_jerk_mean,
            r.peak_jerk_std
        )?;
    }
    Ok(())
}

fn summarize_trajectories(
    logs: &[berrylab::metrics::TrajectoryLog],
    config: &RootConfig,
) -> Result<Vec<LabelSummary>, CliError> {
    let mut rows = Vec::new();
    for log in logs {
        match analyze_log(log, &config.metrics) {
            Ok(analysis) => rows.push((log.label.clone(), analysis.metrics)),
            Err(MetricsError::TooFewSamples { .. }) => {
                eprintln!("note: segment {:?} too short to analyze, skipped", log.label);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(berrylab::metrics::summarize(&rows))
}

fn cmd_simulate(
    checkpoint: &Path,
    stream: &Path,
    config: &RootConfig,
    out: &Path,
) -> Result<(), CliError> {
    let model = Arc::new(config.validate()?);
    let actor = load_actor(checkpoint)?;
    let detections: Vec<DetectionRecord> = read_jsonl(File::open(stream)?)?;
    echo_config(config, out)?;

    let result = run_simulation(config, &model, &actor, &detections)?;

    write_jsonl(BufWriter::new(File::create(out.join("targets.jsonl"))?), &result.targets)?;
    write_jsonl(BufWriter::new(File::create(out.join("commands.jsonl"))?), &result.command_log)?;
    write_jsonl(BufWriter::new(File::create(out.join("audit.jsonl"))?), &result.audit_log)?;
    write_jsonl(
        BufWriter::new(File::create(out.join("success_records.jsonl"))?),
        &result.success_records,
    )?;
    write_trajectory_csv(
        BufWriter::new(File::create(out.join("trajectory.csv"))?),
        &result.trajectory,
    )?;
    let summary_rows = summarize_trajectories(&result.trajectory, config)?;
    write_summary_csv(BufWriter::new(File::create(out.join("metrics.csv"))?), &summary_rows)?;

    let summary = serde_json::json!({
        "targets_emitted": result.targets.len(),
        "targets_planned": result.planned_targets,
        "attempts": result.success_records.len(),
        "reach_rate_percent": result.reach_rate,
        "harvest_rate_percent": result.harvest_rate,
        "final_phase": result.final_phase,
        "commands": result.command_log.len(),
    });
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(std::io::Error::other(e)))?,
    )?;
    println!(
        "simulated {} attempts over {} planned targets; reach {} harvest {} (logs in {})",
        result.success_records.len(),
        result.planned_targets,
        result.reach_rate.map_or("n/a".to_string(), |r| format!("{r:.1}%")),
        result.harvest_rate.map_or("n/a".to_string(), |r| format!("{r:.1}%")),
        out.display()
    );
    Ok(())
}

fn cmd_analyze(trajectory: &Path, config: &RootConfig, out: Option<&Path>) -> Result<(), CliError> {
    config.validate()?;
    let logs = read_trajectory_csv(File::open(trajectory)?)?;
    let rows = summarize_trajectories(&logs, config)?;
    match out {
        Some(p) => write_summary_csv(BufWriter::new(File::create(p)?), &rows)?,
        None => write_summary_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_gradcheck(config: &RootConfig, instances: usize, out: Option<&Path>) -> Result<(), CliError> {
    config.validate()?;
    let report: GradCheckReport = run_gradcheck(instances, config.seed)
        .map_err(|e| CliError::Train(TrainError::Ppo(e)))?;
    for inst in &report.instances {
        println!(
            "instance {:>3}: max relative error {:.3e} ({})",
            inst.index, inst.max_rel_error, inst.worst_param
        );
    }
    println!(
        "gradcheck {}: {} instances, worst {:.3e} at {} (tolerance {:.1e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.instances.len(),
        report.max_rel_error,
        report.worst_param,
        report.tolerance
    );
    if let Some(p) = out {
        let json = serde_json::json!({
            "pass": report.pass,
            "tolerance": report.tolerance,
            "max_rel_error": report.max_rel_error,
            "worst_param": report.worst_param,
            "instances": report.instances.iter().map(|i| {
                serde_json::json!({
                    "index": i.index,
                    "max_rel_error": i.max_rel_error,
                    "worst_param": i.worst_param,
                })
            }).collect::<Vec<_>>(),
        });
        std::fs::write(p, serde_json::to_string_pretty(&json).map_err(|e| CliError::Io(std::io::Error::other(e)))?)?;
    }
    if !report.pass {
        return Err(CliError::GradcheckFailed {
            max_rel_error: report.max_rel_error,
            worst: report.worst_param,
        });
    }
    Ok(())
}
