//! Bridges policy actions to executable joint commands: per-joint time
//! parameterization, near-convergence halt monitoring, and the sequential
//! harvesting phase machine with deterministic gripper side-events.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::NUM_JOINTS;
use crate::perception::TargetPoint;

#[derive(Debug, Error)]
pub enum StreamerError {
    #[error("non-finite joint displacement: {0}")]
    NonFinite(String),
    #[error("streamer config invalid: {0}")]
    InvalidConfig(String),
    #[error("invalid event {event} in phase {phase}")]
    Protocol { phase: String, event: String },
}

/// One executable command: a joint displacement and its duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamCommand {
    pub delta_q: [f64; NUM_JOINTS],
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamerConfig {
    /// Per-joint velocity caps used for time parameterization (rad/s).
    pub vel_max: [f64; NUM_JOINTS],
    /// Distance to target (m) under which the halt monitor is armed.
    pub convergence_radius: f64,
    /// Implied joint-speed threshold (rad/s) that trips the halt.
    pub halt_demand_threshold: f64,
    /// Duration floor for nonzero commands (s).
    pub min_command_duration: f64,
    /// Fixed drop-off position in the robot frame.
    pub basket_position: [f64; 3],
    /// Downward offset (m) applied for the pull-detachment move.
    pub pull_offset: f64,
    /// Policy steps allowed per reach before it is declared failed.
    pub reach_timeout_steps: u32,
}

impl Default for StreamerConfig {
    fn default() -> Self {
        StreamerConfig {
            vel_max: [2.0944, 2.0944, 3.1416, 3.1416, 3.1416, 3.1416],
            convergence_radius: 0.03,
            halt_demand_threshold: 0.5,
            min_command_duration: 0.02,
            basket_position: [-0.50, -0.30, 0.50],
            pull_offset: 0.10,
            reach_timeout_steps: 240,
        }
    }
}

impl StreamerConfig {
    pub fn validate(&self) -> Result<(), StreamerError> {
        if self.vel_max.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(StreamerError::InvalidConfig("vel_max must be positive".into()));
        }
        for (name, v) in [
            ("convergence_radius", self.convergence_radius),
            ("halt_demand_threshold", self.halt_demand_threshold),
            ("min_command_duration", self.min_command_duration),
            ("pull_offset", self.pull_offset),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(StreamerError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.reach_timeout_steps == 0 {
            return Err(StreamerError::InvalidConfig("reach_timeout_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Minimum feasible execution time: `max_i |delta_q_i| / vel_max_i`, floored
/// at `min_command_duration` whenever nonzero motion is commanded. Zero
/// motion yields zero duration (the command is skipped upstream).
pub fn time_parameterize(
    delta_q: &[f64; NUM_JOINTS],
    vel_max: &[f64; NUM_JOINTS],
    min_command_duration: f64,
) -> Result<f64, StreamerError> {
    if delta_q.iter().any(|d| !d.is_finite()) {
        return Err(StreamerError::NonFinite(format!("{delta_q:?}")));
    }
    let duration = delta_q
        .iter()
        .zip(vel_max.iter())
        .map(|(dq, vm)| dq.abs() / vm)
        .fold(0.0f64, f64::max);
    if duration == 0.0 {
        Ok(0.0)
    } else {
        Ok(duration.max(min_command_duration))
    }
}

/// Latched halt state for one reach segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct HaltMonitor {
    halted: bool,
}

impl HaltMonitor {
    /// Re-arm at the start of each reach.
    pub fn reset(&mut self) {
        self.halted = false;
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamDecision {
    Command(StreamCommand),
    /// Zero motion was requested; nothing to execute.
    Skip,
    /// Halt engaged (or previously latched): suppress motion for this reach.
    Halt,
}

/// Gate one policy-generated displacement through time parameterization and
/// the near-convergence halt monitor. Once the monitor latches, every
/// subsequent call returns `Halt` until the monitor is reset.
pub fn stream_step(
    delta_q: &[f64; NUM_JOINTS],
    ee_distance_to_target: f64,
    config: &StreamerConfig,
    monitor: &mut HaltMonitor,
) -> Result<StreamDecision, StreamerError> {
    if monitor.halted {
        return Ok(StreamDecision::Halt);
    }
    let duration = time_parameterize(delta_q, &config.vel_max, config.min_command_duration)?;
    if duration == 0.0 {
        return Ok(StreamDecision::Skip);
    }
    if ee_distance_to_target < config.convergence_radius {
        let magnitude = delta_q.iter().map(|d| d * d).sum::<f64>().sqrt();
        if magnitude / duration > config.halt_demand_threshold {
            monitor.halted = true;
            return Ok(StreamDecision::Halt);
        }
    }
    Ok(StreamDecision::Command(StreamCommand { delta_q: *delta_q, duration }))
}

/// Ordered harvesting plan: targets ascending by distance from the current
/// tool position (stable for ties), plus the fixed home and basket poses.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestPlan {
    pub targets: Vec<TargetPoint>,
    pub home_position: Vector3<f64>,
    pub basket_position: Vector3<f64>,
}

pub fn plan_harvest(
    targets: &[TargetPoint],
    ee_position: &Vector3<f64>,
    home_position: Vector3<f64>,
    basket_position: Vector3<f64>,
) -> HarvestPlan {
    let mut ordered: Vec<TargetPoint> = targets.to_vec();
    ordered.sort_by(|a, b| {
        let da = (a.position() - ee_position).norm();
        let db = (b.position() - ee_position).norm();
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
    });
    HarvestPlan { targets: ordered, home_position, basket_position }
}

/// Phases of the sequential harvesting routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestPhase {
    Home,
    Scan,
    /// Reaching toward the plan entry at this index (0 = nearest of the
    /// current, re-sorted plan).
    Reach { target: usize },
    Grasp,
    Pull,
    Transfer,
    Release,
    Rescan,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestEvent {
    StartScan,
    ScanComplete { targets: usize },
    ReachSucceeded,
    ReachFailed,
    GraspComplete,
    PullComplete,
    TransferComplete,
    ReleaseComplete { targets_remaining: usize },
    RescanComplete,
}

/// Deterministic gripper side-events emitted on phase entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperAction {
    Close,
    Open,
}

/// Advance the phase machine. Invalid (phase, event) pairs are rejected with
/// both named; the gripper closes on entering Grasp and opens on entering
/// Release.
pub fn advance_phase(
    phase: HarvestPhase,
    event: HarvestEvent,
) -> Result<(HarvestPhase, Option<GripperAction>), StreamerError> {
    use HarvestEvent as E;
    use HarvestPhase as P;
    let next = match (phase, event) {
        (P::Home, E::StartScan) => (P::Scan, None),
        // Scanning happens from the home pose, so a scan result is also
        // accepted directly in Home.
        (P::Home | P::Scan, E::ScanComplete { targets: 0 }) => (P::Done, None),
        (P::Home | P::Scan, E::ScanComplete { .. }) => (P::Reach { target: 0 }, None),
        (P::Reach { .. }, E::ReachSucceeded) => (P::Grasp, Some(GripperAction::Close)),
        (P::Reach { .. }, E::ReachFailed) => (P::Rescan, None),
        (P::Grasp, E::GraspComplete) => (P::Pull, None),
        (P::Pull, E::PullComplete) => (P::Transfer, None),
        (P::Transfer, E::TransferComplete) => (P::Release, Some(GripperAction::Open)),
        (P::Release, E::ReleaseComplete { targets_remaining: 0 }) => (P::Rescan, None),
        (P::Release, E::ReleaseComplete { .. }) => (P::Reach { target: 0 }, None),
        (P::Rescan, E::RescanComplete) => (P::Scan, None),
        (phase, event) => {
            return Err(StreamerError::Protocol {
                phase: format!("{phase:?}"),
                event: format!("{event:?}"),
            })
        }
    };
    Ok(next)
}
