//! Closed-loop harvesting simulation: detection stream in, phase-machine
//! driven reaching/pulling/transfer on the kinematic arm, command and audit
//! logs plus labeled trajectory segments out.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RootConfig;
use crate::env::{
    build_observation, command_nominal_orientation, Action, EnvError, EnvState, PoseCommand,
};
use crate::kinematics::{
    forward_kinematics, track_joint_target, ArmModel, JointVector, KinematicsError, NUM_JOINTS,
};
use crate::metrics::{reach_success_rate, harvest_success_rate, SuccessRecord, TrajectoryLog};
use crate::perception::{process_stream, DetectionRecord, PerceptionError, TargetPoint};
use crate::ppo::{GaussianPolicy, PpoError};
use crate::streamer::{
    advance_phase, plan_harvest, stream_step, GripperAction, HaltMonitor, HarvestEvent,
    HarvestPhase, StreamDecision, StreamerError,
};

pub const LABEL_REACH: &str = "home_to_strawberry";
pub const LABEL_PULL: &str = "pull";
pub const LABEL_TRANSFER: &str = "strawberry_to_basket";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Streamer(#[from] StreamerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error("simulation input invalid: {0}")]
    Invalid(String),
}

/// One emitted command, mirroring the line-delimited JSON log format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandLogEntry {
    pub seq: u64,
    pub phase: HarvestPhase,
    pub delta_q: [f64; NUM_JOINTS],
    pub duration: f64,
}

/// Phase-transition audit records with timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditEntry {
    Transition {
        seq: u64,
        stamp: f64,
        from: HarvestPhase,
        event: HarvestEvent,
        to: HarvestPhase,
    },
    Gripper { seq: u64, stamp: f64, action: GripperAction },
    Note { seq: u64, stamp: f64, phase: HarvestPhase, message: String },
}

#[derive(Debug)]
pub struct SimulationOutput {
    /// Every smoothed target the perception pipeline emitted.
    pub targets: Vec<TargetPoint>,
    /// Targets that entered the harvest plan after workspace filtering.
    pub planned_targets: usize,
    pub command_log: Vec<CommandLogEntry>,
    pub audit_log: Vec<AuditEntry>,
    pub trajectory: Vec<TrajectoryLog>,
    pub success_records: Vec<SuccessRecord>,
    pub reach_rate: Option<f64>,
    pub harvest_rate: Option<f64>,
    pub final_phase: HarvestPhase,
}

struct ReachOutcome {
    final_distance: f64,
    reached: bool,
    halted: bool,
}

struct Sim<'a> {
    config: &'a RootConfig,
    model: &'a Arc<ArmModel>,
    actor: &'a GaussianPolicy,
    nominal: UnitQuaternion<f64>,
    q: JointVector,
    qdot: [f64; NUM_JOINTS],
    a_prev: [f64; NUM_JOINTS],
    time: f64,
    seq: u64,
    command_log: Vec<CommandLogEntry>,
    audit_log: Vec<AuditEntry>,
    trajectory: Vec<TrajectoryLog>,
}

impl<'a> Sim<'a> {
    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn ee_position(&self) -> Result<Vector3<f64>, SimError> {
        Ok(forward_kinematics(self.model, &self.q)?.position)
    }

    fn note(&mut self, phase: HarvestPhase, message: String) {
        let entry = AuditEntry::Note { seq: self.next_seq(), stamp: self.time, phase, message };
        self.audit_log.push(entry);
    }

    fn transition(
        &mut self,
        phase: HarvestPhase,
        event: HarvestEvent,
    ) -> Result<HarvestPhase, SimError> {
        let (next, gripper) = advance_phase(phase, event)?;
        let entry = AuditEntry::Transition {
            seq: self.next_seq(),
            stamp: self.time,
            from: phase,
            event,
            to: next,
        };
        self.audit_log.push(entry);
        if let Some(action) = gripper {
            let entry = AuditEntry::Gripper { seq: self.next_seq(), stamp: self.time, action };
            self.audit_log.push(entry);
        }
        Ok(next)
    }

    /// Drive the policy toward `goal` through the command streamer until it
    /// reaches tolerance, the halt monitor latches, or the step budget runs
    /// out. Execution uses the same saturated tracking as training.
    fn reach_segment(
        &mut self,
        goal: Vector3<f64>,
        label: &str,
        phase: HarvestPhase,
    ) -> Result<ReachOutcome, SimError> {
        let env_cfg = &self.config.env;
        let streamer_cfg = &self.config.streamer;
        let reach_eps = self.config.metrics.reach_eps;
        let command = PoseCommand { position: goal, orientation: self.nominal };
        let mut monitor = HaltMonitor::default();
        let mut samples: Vec<(f64, Vector3<f64>)> = vec![(self.time, self.ee_position()?)];
        let mut reached = false;
        let mut halted = false;

        for _ in 0..streamer_cfg.reach_timeout_steps {
            let distance = (self.ee_position()? - goal).norm();
            if distance <= reach_eps {
                reached = true;
                break;
            }
            let state = EnvState {
                q: self.q,
                qdot: self.qdot,
                a_prev: self.a_prev,
                command,
                step: 0,
            };
            let obs = build_observation(&state, self.model);
            let (mean, _) = self.actor.forward(obs.as_slice())?;
            let mut action = Action::zeros();
            action.0.copy_from_slice(&mean);
            let clamped = action.clamped();
            let q_default = self.model.q_default();
            let mut q_target = q_default;
            for i in 0..NUM_JOINTS {
                q_target[i] += env_cfg.action_scale * clamped.0[i];
            }
            let mut delta_q = [0.0; NUM_JOINTS];
            for i in 0..NUM_JOINTS {
                delta_q[i] = q_target[i] - self.q[i];
            }

            match stream_step(&delta_q, distance, streamer_cfg, &mut monitor)? {
                StreamDecision::Halt => {
                    halted = true;
                    self.note(phase, format!("halt latched at distance {distance:.4}"));
                    break;
                }
                StreamDecision::Skip => {
                    self.time += env_cfg.dt * env_cfg.decimation as f64;
                    samples.push((self.time, self.ee_position()?));
                }
                StreamDecision::Command(cmd) => {
                    let entry = CommandLogEntry {
                        seq: self.next_seq(),
                        phase,
                        delta_q: cmd.delta_q,
                        duration: cmd.duration,
                    };
                    self.command_log.push(entry);
                    for _ in 0..env_cfg.decimation {
                        let (q_next, qdot) =
                            track_joint_target(&self.q, &q_target, self.model.limits(), env_cfg.dt)?;
                        self.q = q_next;
                        self.qdot = qdot;
                        self.time += env_cfg.dt;
                        samples.push((self.time, self.ee_position()?));
                    }
                }
            }
            self.a_prev = clamped.0;
        }

        let final_distance = (self.ee_position()? - goal).norm();
        if !reached && final_distance <= reach_eps {
            reached = true;
        }
        if samples.len() >= 2 {
            self.trajectory.push(TrajectoryLog { label: label.to_string(), samples });
        }
        Ok(ReachOutcome { final_distance, reached, halted })
    }
}

/// Run the full closed loop over a detection stream with a trained policy.
pub fn run_simulation(
    config: &RootConfig,
    model: &Arc<ArmModel>,
    actor: &GaussianPolicy,
    detections: &[DetectionRecord],
) -> Result<SimulationOutput, SimError> {
    let (targets, stream_events) = process_stream(detections, config.perception.clone())?;

    let nominal = command_nominal_orientation(&config.env, model)?;
    let mut sim = Sim {
        config,
        model,
        actor,
        nominal,
        q: model.q_default(),
        qdot: [0.0; NUM_JOINTS],
        a_prev: [0.0; NUM_JOINTS],
        time: 0.0,
        seq: 0,
        command_log: Vec::new(),
        audit_log: Vec::new(),
        trajectory: Vec::new(),
    };

    // Latest smoothed emission per track becomes the harvest candidate.
    let mut latest: BTreeMap<u64, TargetPoint> = BTreeMap::new();
    for t in &targets {
        latest.insert(t.track, *t);
    }
    let rejects = stream_events
        .iter()
        .filter(|e| matches!(e, crate::perception::StreamEvent::Rejected { .. }))
        .count();
    sim.note(
        HarvestPhase::Home,
        format!(
            "perception: {} emissions over {} tracks, {} detections rejected",
            targets.len(),
            latest.len(),
            rejects
        ),
    );

    let mut pool: Vec<TargetPoint> = Vec::new();
    for (_, t) in latest {
        if config.env.workspace.contains(&t.position()) {
            pool.push(t);
        } else {
            sim.note(
                HarvestPhase::Home,
                format!("target_out_of_workspace track={} at ({:.3}, {:.3}, {:.3})", t.track, t.x, t.y, t.z),
            );
        }
    }
    let planned_targets = pool.len();

    let home_position = sim.ee_position()?;
    let basket_position = Vector3::from(config.streamer.basket_position);
    let mut success_records: Vec<SuccessRecord> = Vec::new();
    let mut attempt: u64 = 0;
    let mut current: Option<TargetPoint> = None;
    let mut stage = (false, false, false); // grasped, detached, deposited
    let mut reach_final = 0.0;
    let mut reach_ok = false;

    let mut phase = sim.transition(HarvestPhase::Home, HarvestEvent::StartScan)?;
    loop {
        match phase {
            HarvestPhase::Scan => {
                phase = sim.transition(phase, HarvestEvent::ScanComplete { targets: pool.len() })?;
            }
            HarvestPhase::Reach { .. } => {
                let ee = sim.ee_position()?;
                let plan = plan_harvest(&pool, &ee, home_position, basket_position);
                let target = plan.targets[0];
                pool.retain(|t| t.track != target.track);
                current = Some(target);
                stage = (false, false, false);
                let outcome = sim.reach_segment(target.position(), LABEL_REACH, phase)?;
                reach_final = outcome.final_distance;
                reach_ok = outcome.reached;
                if outcome.halted {
                    sim.note(phase, format!("reach ended by halt, distance {:.4}", outcome.final_distance));
                }
                let event = if outcome.reached {
                    HarvestEvent::ReachSucceeded
                } else {
                    HarvestEvent::ReachFailed
                };
                if !outcome.reached {
                    attempt += 1;
                    success_records.push(SuccessRecord {
                        attempt,
                        final_distance: reach_final,
                        reached_in_time: false,
                        grasped: false,
                        detached: false,
                        deposited: false,
                    });
                }
                phase = sim.transition(phase, event)?;
            }
            HarvestPhase::Grasp => {
                stage.0 = true;
                phase = sim.transition(phase, HarvestEvent::GraspComplete)?;
            }
            HarvestPhase::Pull => {
                let target = current.ok_or_else(|| SimError::Invalid("pull without target".into()))?;
                let goal = target.position() - Vector3::new(0.0, 0.0, config.streamer.pull_offset);
                let outcome = sim.reach_segment(goal, LABEL_PULL, phase)?;
                stage.1 = stage.0 && outcome.reached;
                phase = sim.transition(phase, HarvestEvent::PullComplete)?;
            }
            HarvestPhase::Transfer => {
                let outcome = sim.reach_segment(basket_position, LABEL_TRANSFER, phase)?;
                stage.2 = stage.1 && outcome.reached;
                phase = sim.transition(phase, HarvestEvent::TransferComplete)?;
            }
            HarvestPhase::Release => {
                attempt += 1;
                success_records.push(SuccessRecord {
                    attempt,
                    final_distance: reach_final,
                    reached_in_time: reach_ok,
                    grasped: stage.0,
                    detached: stage.1,
                    deposited: stage.2,
                });
                phase = sim.transition(
                    phase,
                    HarvestEvent::ReleaseComplete { targets_remaining: pool.len() },
                )?;
            }
            HarvestPhase::Rescan => {
                phase = sim.transition(phase, HarvestEvent::RescanComplete)?;
            }
            HarvestPhase::Done => break,
            HarvestPhase::Home => {
                return Err(SimError::Invalid("phase machine re-entered Home".into()))
            }
        }
    }

    let reach_eps = config.metrics.reach_eps;
    let reach_rate = (!success_records.is_empty())
        .then(|| reach_success_rate(&success_records, reach_eps))
        .transpose()
        .map_err(|e| SimError::Invalid(e.to_string()))?;
    let harvest_rate = (!success_records.is_empty())
        .then(|| harvest_success_rate(&success_records))
        .transpose()
        .map_err(|e| SimError::Invalid(e.to_string()))?;

    Ok(SimulationOutput {
        targets,
        planned_targets,
        command_log: sim.command_log,
        audit_log: sim.audit_log,
        trajectory: sim.trajectory,
        success_records,
        reach_rate,
        harvest_rate,
        final_phase: phase,
    })
}
