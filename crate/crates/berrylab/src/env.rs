//! Goal-conditioned reach environment: samples target poses inside a
//! workspace box, applies scaled joint-position actions through saturated
//! tracking, and computes the five-term shaped reward.

use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    forward_kinematics, orientation_error, track_joint_target, ArmModel, JointVector,
    KinematicsError, NUM_JOINTS,
};

pub const OBS_DIM: usize = 25;
pub const ACTION_DIM: usize = NUM_JOINTS;

/// Observation layout offsets: [q_rel(6), qdot(6), cmd_pos(3), cmd_quat(4), a_prev(6)].
pub const OBS_Q_REL: std::ops::Range<usize> = 0..6;
pub const OBS_QDOT: std::ops::Range<usize> = 6..12;
pub const OBS_CMD_POS: std::ops::Range<usize> = 12..15;
pub const OBS_CMD_QUAT: std::ops::Range<usize> = 15..19;
pub const OBS_A_PREV: std::ops::Range<usize> = 19..25;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment config invalid: {0}")]
    InvalidConfig(String),
    #[error("episode is done; call reset before stepping")]
    EpisodeDone,
    #[error("command sampling failed after {0} attempts")]
    CommandSampling(u32),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Axis-aligned workspace box in meters. A zero-size box is a valid
/// degenerate case (commands collapse to a single point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3 {
    pub fn validate(&self) -> Result<(), EnvError> {
        for i in 0..3 {
            if !self.min[i].is_finite() || !self.max[i].is_finite() || self.min[i] > self.max[i] {
                return Err(EnvError::InvalidConfig(format!(
                    "workspace axis {i}: min {} must not exceed max {}",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - 1e-12 && p[i] <= self.max[i] + 1e-12)
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (k, corner) in out.iter_mut().enumerate() {
            for i in 0..3 {
                corner[i] = if (k >> i) & 1 == 0 { self.min[i] } else { self.max[i] };
            }
        }
        out
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        let mut p = Vector3::zeros();
        for i in 0..3 {
            p[i] = if self.min[i] == self.max[i] {
                self.min[i]
            } else {
                rng.random_range(self.min[i]..=self.max[i])
            };
        }
        p
    }
}

/// Target end-effector pose for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCommand {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// Weights of the five reward terms plus the fine-shaping length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_pos: f64,
    pub w_fine: f64,
    pub w_ori: f64,
    pub w_act: f64,
    pub w_vel: f64,
    /// Length scale (m) of the exponential fine-positioning term.
    pub sigma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_pos: 1.0,
            w_fine: 0.5,
            w_ori: 0.5,
            w_act: 0.01,
            w_vel: 0.01,
            sigma: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), EnvError> {
        let all = [self.w_pos, self.w_fine, self.w_ori, self.w_act, self.w_vel, self.sigma];
        if all.iter().any(|w| !w.is_finite()) {
            return Err(EnvError::InvalidConfig("reward weights must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(EnvError::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Weighted sum of the five reward components.
pub fn reward_total(w: &RewardWeights, components: &[f64; 5]) -> f64 {
    w.w_pos * components[0]
        + w.w_fine * components[1]
        + w.w_ori * components[2]
        + w.w_act * components[3]
        + w.w_vel * components[4]
}

fn default_dt() -> f64 {
    1.0 / 60.0
}
fn default_decimation() -> u32 {
    2
}
fn default_horizon() -> u32 {
    240
}
fn default_action_scale() -> f64 {
    0.5
}
fn default_max_tilt_deg() -> f64 {
    15.0
}
fn default_workspace() -> Box3 {
    // Centered on the tool position at the default home configuration;
    // sized to sit well inside the envelope reachable with |action| <= 1
    // at the default action scale (see examples/workspace_probe.rs).
    Box3 {
        min: [-0.78, -0.36, 0.45],
        max: [-0.44, 0.02, 0.85],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Inner tracking step (s); the policy acts every `decimation` steps.
    pub dt: f64,
    pub decimation: u32,
    /// Fixed episode horizon in policy steps.
    pub horizon: u32,
    pub workspace: Box3,
    /// Radians of joint offset commanded per unit action.
    pub action_scale: f64,
    pub weights: RewardWeights,
    /// Nominal command orientation as [x, y, z, w]; `None` uses the tool
    /// orientation at the home configuration.
    pub nominal_orientation: Option<[f64; 4]>,
    /// Bound on the random tilt applied to the nominal orientation.
    pub max_tilt_deg: f64,
    /// Uniform joint jitter (rad) applied at reset; 0 disables.
    pub start_jitter: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: default_dt(),
            decimation: default_decimation(),
            horizon: default_horizon(),
            workspace: default_workspace(),
            action_scale: default_action_scale(),
            weights: RewardWeights::default(),
            nominal_orientation: None,
            max_tilt_deg: default_max_tilt_deg(),
            start_jitter: 0.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, model: &ArmModel) -> Result<(), EnvError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EnvError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.decimation < 1 {
            return Err(EnvError::InvalidConfig("decimation must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(EnvError::InvalidConfig("horizon must be >= 1".into()));
        }
        if !(self.action_scale > 0.0) || !self.action_scale.is_finite() {
            return Err(EnvError::InvalidConfig("action_scale must be positive".into()));
        }
        if !(0.0..=180.0).contains(&self.max_tilt_deg) {
            return Err(EnvError::InvalidConfig("max_tilt_deg must be in [0, 180]".into()));
        }
        if self.start_jitter < 0.0 || !self.start_jitter.is_finite() {
            return Err(EnvError::InvalidConfig("start_jitter must be non-negative".into()));
        }
        self.workspace.validate()?;
        self.weights.validate()?;
        let radius = model.reach_radius();
        let base = model.base_origin();
        for corner in self.workspace.corners() {
            if (corner - base).norm() > radius {
                return Err(EnvError::InvalidConfig(format!(
                    "workspace corner ({:.3}, {:.3}, {:.3}) lies outside the reach sphere (radius {:.3})",
                    corner[0], corner[1], corner[2], radius
                )));
            }
        }
        if let Some(q) = self.nominal_orientation {
            let norm = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(EnvError::InvalidConfig(format!(
                    "nominal_orientation must be unit-norm, got norm {norm}"
                )));
            }
        }
        Ok(())
    }
}

/// Mutable per-episode state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub q: JointVector,
    pub qdot: [f64; NUM_JOINTS],
    pub a_prev: [f64; ACTION_DIM],
    pub command: PoseCommand,
    pub step: u32,
}

/// Fixed-length policy input; see the `OBS_*` layout ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Six continuous joint-position actions; clamped to [-1, 1] before scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    pub fn zeros() -> Self {
        Action([0.0; ACTION_DIM])
    }

    pub fn clamped(&self) -> Action {
        let mut a = *self;
        for v in a.0.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        a
    }
}

/// Sample a pose command: position uniform in the workspace box, orientation
/// a bounded random tilt of the nominal. Positions falling outside the reach
/// sphere are resampled (capped at 100 attempts).
pub fn sample_command(
    rng: &mut impl Rng,
    config: &EnvConfig,
    model: &ArmModel,
) -> Result<PoseCommand, EnvError> {
    const MAX_ATTEMPTS: u32 = 100;
    let nominal = command_nominal_orientation(config, model)?;
    let radius = model.reach_radius();
    let base = model.base_origin();
    let max_tilt = config.max_tilt_deg.to_radians();
    for _ in 0..MAX_ATTEMPTS {
        let position = config.workspace.sample(rng);
        let axis = random_axis(rng);
        let angle = if max_tilt > 0.0 {
            rng.random_range(0.0..=max_tilt)
        } else {
            0.0
        };
        if (position - base).norm() > radius {
            continue;
        }
        let orientation = nominal * UnitQuaternion::from_axis_angle(&axis, angle);
        return Ok(PoseCommand { position, orientation });
    }
    Err(EnvError::CommandSampling(MAX_ATTEMPTS))
}

fn random_axis(rng: &mut impl Rng) -> nalgebra::Unit<Vector3<f64>> {
    // Rejection-sampled direction; bounded retries keep the draw count finite.
    for _ in 0..64 {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return nalgebra::Unit::new_unchecked(v / n);
        }
    }
    Vector3::z_axis()
}

/// Nominal command orientation: configured fixed quaternion, or the tool
/// orientation at the home configuration when unset.
pub fn command_nominal_orientation(
    config: &EnvConfig,
    model: &ArmModel,
) -> Result<UnitQuaternion<f64>, EnvError> {
    match config.nominal_orientation {
        Some([x, y, z, w]) => Ok(UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
            w, x, y, z,
        ))),
        None => Ok(forward_kinematics(model, &model.q_default())?.orientation),
    }
}

/// Assemble the 25-dim observation from environment state.
pub fn build_observation(state: &EnvState, model: &ArmModel) -> Observation {
    let mut o = [0.0; OBS_DIM];
    let q_default = model.q_default();
    for i in 0..NUM_JOINTS {
        o[OBS_Q_REL.start + i] = state.q[i] - q_default[i];
        o[OBS_QDOT.start + i] = state.qdot[i];
        o[OBS_A_PREV.start + i] = state.a_prev[i];
    }
    for i in 0..3 {
        o[OBS_CMD_POS.start + i] = state.command.position[i];
    }
    // Quaternion stored as [x, y, z, w].
    let quat = state.command.orientation.coords;
    for i in 0..4 {
        o[OBS_CMD_QUAT.start + i] = quat[i];
    }
    Observation(o)
}

/// Five-term shaped reward evaluated at the post-step state. `action` is the
/// clamped action just applied; `state.a_prev` must still hold the previous
/// action. Components: (-d, exp(-d/sigma), -dtheta, -|a - a_prev|^2, -|qdot|^2).
pub fn compute_reward(
    state: &EnvState,
    action: &Action,
    model: &ArmModel,
    w: &RewardWeights,
) -> Result<(f64, [f64; 5]), EnvError> {
    w.validate()?;
    let pose = forward_kinematics(model, &state.q)?;
    let d = (pose.position - state.command.position).norm();
    let dtheta = orientation_error(&pose.orientation, &state.command.orientation)?;
    let act_sq: f64 = action
        .0
        .iter()
        .zip(state.a_prev.iter())
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    let vel_sq: f64 = state.qdot.iter().map(|v| v * v).sum();
    let components = [-d, (-d / w.sigma).exp(), -dtheta, -act_sq, -vel_sq];
    Ok((reward_total(w, &components), components))
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub components: [f64; 5],
    pub done: bool,
}

/// One independently seeded reach environment instance.
#[derive(Debug, Clone)]
pub struct ReachEnv {
    config: EnvConfig,
    model: Arc<ArmModel>,
    rng: ChaCha8Rng,
    state: EnvState,
    done: bool,
}

impl ReachEnv {
    /// Validates the config against the arm and resets with the given seed.
    pub fn new(config: EnvConfig, model: Arc<ArmModel>, seed: u64) -> Result<Self, EnvError> {
        config.validate(&model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = Self::initial_state(&config, &model, &mut rng)?;
        Ok(ReachEnv {
            config,
            model,
            rng,
            state,
            done: false,
        })
    }

    fn initial_state(
        config: &EnvConfig,
        model: &ArmModel,
        rng: &mut ChaCha8Rng,
    ) -> Result<EnvState, EnvError> {
        let mut q = model.q_default();
        if config.start_jitter > 0.0 {
            for i in 0..NUM_JOINTS {
                let jitter = rng.random_range(-config.start_jitter..=config.start_jitter);
                q[i] = model.limits().clamp_position(i, q[i] + jitter);
            }
        }
        let command = sample_command(rng, config, model)?;
        Ok(EnvState {
            q,
            qdot: [0.0; NUM_JOINTS],
            a_prev: [0.0; ACTION_DIM],
            command,
            step: 0,
        })
    }

    /// Start a fresh episode: home (optionally jittered) configuration,
    /// zero velocity and action history, newly sampled command.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.state = Self::initial_state(&self.config, &self.model, &mut self.rng)?;
        self.done = false;
        Ok(build_observation(&self.state, &self.model))
    }

    /// Apply one policy action: `decimation` saturated tracking sub-steps
    /// toward `q_default + action_scale * clamp(action)`, then reward the
    /// post-step state.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let clamped = action.clamped();
        let q_default = self.model.q_default();
        let mut q_target = q_default;
        for i in 0..NUM_JOINTS {
            q_target[i] += self.config.action_scale * clamped.0[i];
        }
        let mut q = self.state.q;
        let mut qdot = [0.0; NUM_JOINTS];
        for _ in 0..self.config.decimation {
            let (next, vel) = track_joint_target(&q, &q_target, self.model.limits(), self.config.dt)?;
            q = next;
            qdot = vel;
        }
        self.state.q = q;
        self.state.qdot = qdot;
        let (reward, components) =
            compute_reward(&self.state, &clamped, &self.model, &self.config.weights)?;
        self.state.a_prev = clamped.0;
        self.state.step += 1;
        self.done = self.state.step >= self.config.horizon;
        Ok(StepOutcome {
            obs: build_observation(&self.state, &self.model),
            reward,
            components,
            done: self.done,
        })
    }

    pub fn observation(&self) -> Observation {
        build_observation(&self.state, &self.model)
    }

    /// Euclidean distance from the current tool position to the command.
    pub fn ee_distance(&self) -> Result<f64, EnvError> {
        let pose = forward_kinematics(&self.model, &self.state.q)?;
        Ok((pose.position - self.state.command.position).norm())
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<ArmModel> {
        &self.model
    }

    /// Override the episode command (used by the closed-loop simulator to
    /// point the policy at perception targets).
    pub fn set_command(&mut self, command: PoseCommand) {
        self.state.command = command;
    }

    /// Clear the episode clock without moving the arm; the next `step` calls
    /// continue from the current configuration.
    pub fn restart_clock(&mut self) {
        self.state.step = 0;
        self.done = false;
    }
}

/// One rollout trace record, exportable as line-delimited JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub q: [f64; NUM_JOINTS],
    pub qdot: [f64; NUM_JOINTS],
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub components: [f64; 5],
}
