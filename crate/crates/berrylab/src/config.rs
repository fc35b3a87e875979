//! Single structured config file covering every subsystem, with defaults,
//! cross-field validation, and a canonical echo for provenance hashing.

use std::path::Path;

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::EnvConfig;
use crate::kinematics::{ArmModel, DhRow, JointLimits, JointVector, NUM_JOINTS};
use crate::metrics::MetricsConfig;
use crate::perception::PerceptionConfig;
use crate::ppo::PpoConfig;
use crate::streamer::StreamerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Validation(String),
}

/// Arm geometry and limits. Defaults are published UR10e nominal DH values
/// with an elbow-up, tool-down home configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub dh: Vec<DhRow>,
    pub base_position: [f64; 3],
    /// Base orientation as roll-pitch-yaw (rad), applied z-y-x.
    pub base_rpy: [f64; 3],
    pub q_default: [f64; NUM_JOINTS],
    pub pos_min: [f64; NUM_JOINTS],
    pub pos_max: [f64; NUM_JOINTS],
    pub vel_max: [f64; NUM_JOINTS],
}

impl Default for ArmConfig {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        ArmConfig {
            dh: vec![
                DhRow { a: 0.0, d: 0.1807, alpha: FRAC_PI_2, theta_offset: 0.0 },
                DhRow { a: -0.6127, d: 0.0, alpha: 0.0, theta_offset: 0.0 },
                DhRow { a: -0.57155, d: 0.0, alpha: 0.0, theta_offset: 0.0 },
                DhRow { a: 0.0, d: 0.17415, alpha: FRAC_PI_2, theta_offset: 0.0 },
                DhRow { a: 0.0, d: 0.11985, alpha: -FRAC_PI_2, theta_offset: 0.0 },
                DhRow { a: 0.0, d: 0.11655, alpha: 0.0, theta_offset: 0.0 },
            ],
            base_position: [0.0; 3],
            base_rpy: [0.0; 3],
            q_default: [0.0, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, 0.0],
            pos_min: [-std::f64::consts::TAU; NUM_JOINTS],
            pos_max: [std::f64::consts::TAU; NUM_JOINTS],
            vel_max: [2.0944, 2.0944, 3.1416, 3.1416, 3.1416, 3.1416],
        }
    }
}

impl ArmConfig {
    pub fn build(&self) -> Result<ArmModel, ConfigError> {
        if self.dh.len() != NUM_JOINTS {
            return Err(ConfigError::Validation(format!(
                "arm.dh must have exactly {NUM_JOINTS} rows, got {}",
                self.dh.len()
            )));
        }
        let mut rows = [DhRow { a: 0.0, d: 0.0, alpha: 0.0, theta_offset: 0.0 }; NUM_JOINTS];
        rows.copy_from_slice(&self.dh);
        let [roll, pitch, yaw] = self.base_rpy;
        let base = Isometry3::from_parts(
            Translation3::new(self.base_position[0], self.base_position[1], self.base_position[2]),
            UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        );
        let limits = JointLimits {
            pos_min: self.pos_min,
            pos_max: self.pos_max,
            vel_max: self.vel_max,
        };
        ArmModel::new(rows, base, JointVector(self.q_default), limits)
            .map_err(|e| ConfigError::Validation(format!("arm: {e}")))
    }
}

/// Default arm model (UR10e nominal table).
pub fn default_arm_model() -> Result<ArmModel, ConfigError> {
    ArmConfig::default().build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RootConfig {
    pub seed: u64,
    pub arm: ArmConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub perception: PerceptionConfig,
    pub streamer: StreamerConfig,
    pub metrics: MetricsConfig,
}

impl RootConfig {
    /// Parse from TOML text; an empty string yields the all-defaults config.
    /// Validation covers every section plus the cross-field invariants.
    pub fn from_toml_str(text: &str) -> Result<RootConfig, ConfigError> {
        let config: RootConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RootConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        RootConfig::from_toml_str(&text)
    }

    /// Build the arm model and check every section against it.
    pub fn validate(&self) -> Result<ArmModel, ConfigError> {
        let model = self.arm.build()?;
        self.env
            .validate(&model)
            .map_err(|e| ConfigError::Validation(format!("env: {e}")))?;
        self.ppo
            .validate()
            .map_err(|e| ConfigError::Validation(format!("ppo: {e}")))?;
        self.perception
            .validate()
            .map_err(|e| ConfigError::Validation(format!("perception: {e}")))?;
        self.streamer
            .validate()
            .map_err(|e| ConfigError::Validation(format!("streamer: {e}")))?;
        self.metrics
            .validate()
            .map_err(|e| ConfigError::Validation(format!("metrics: {e}")))?;
        Ok(model)
    }

    /// Canonical TOML echo of the effective config.
    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical echo, recorded in checkpoints.
    pub fn hash(&self) -> Result<String, ConfigError> {
        let canonical = self.to_toml_string()?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(hex_string(&digest))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
