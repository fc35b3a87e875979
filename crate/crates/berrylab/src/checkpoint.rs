//! Portable JSON policy checkpoints: layer shapes, flat row-major weights,
//! log-std head, training iteration, and the config hash they were trained
//! under. Loads are shape-validated; save -> load -> save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ppo::mlp::{Activation, GaussianPolicy, Layer, Mlp};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Json(String),
    #[error("checkpoint invalid: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub layers: Vec<LayerSpec>,
    /// Row-major `(out_dim, in_dim)` weights, one vector per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub log_std: Vec<f64>,
    pub iteration: u32,
    pub config_hash: String,
}

impl PolicyCheckpoint {
    pub fn from_policy(actor: &GaussianPolicy, iteration: u32, config_hash: String) -> Self {
        PolicyCheckpoint {
            version: CHECKPOINT_VERSION,
            obs_dim: actor.mlp.input_dim(),
            action_dim: actor.action_dim(),
            layers: actor
                .mlp
                .layers
                .iter()
                .map(|l| LayerSpec { in_dim: l.in_dim, out_dim: l.out_dim, activation: l.activation })
                .collect(),
            weights: actor.mlp.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: actor.mlp.layers.iter().map(|l| l.bias.clone()).collect(),
            log_std: actor.log_std.clone(),
            iteration,
            config_hash,
        }
    }

    /// Shape validation: chained layer dims, array lengths, version.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Shape(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.layers.is_empty() {
            return Err(CheckpointError::Shape("no layers".into()));
        }
        if self.layers.len() != self.weights.len() || self.layers.len() != self.biases.len() {
            return Err(CheckpointError::Shape(
                "layers, weights, and biases must have equal counts".into(),
            ));
        }
        if self.layers[0].in_dim != self.obs_dim {
            return Err(CheckpointError::Shape(format!(
                "first layer consumes {} inputs but obs_dim is {}",
                self.layers[0].in_dim, self.obs_dim
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(CheckpointError::Shape(format!(
                    "layer {i} outputs {} but layer {} consumes {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        let last = self.layers.last().unwrap();
        if last.out_dim != self.action_dim || self.log_std.len() != self.action_dim {
            return Err(CheckpointError::Shape(format!(
                "output dim {} / log_std {} disagree with action_dim {}",
                last.out_dim,
                self.log_std.len(),
                self.action_dim
            )));
        }
        for (i, spec) in self.layers.iter().enumerate() {
            if self.weights[i].len() != spec.in_dim * spec.out_dim {
                return Err(CheckpointError::Shape(format!(
                    "layer {i}: expected {} weights, got {}",
                    spec.in_dim * spec.out_dim,
                    self.weights[i].len()
                )));
            }
            if self.biases[i].len() != spec.out_dim {
                return Err(CheckpointError::Shape(format!(
                    "layer {i}: expected {} biases, got {}",
                    spec.out_dim,
                    self.biases[i].len()
                )));
            }
        }
        let finite = self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
            && self.log_std.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CheckpointError::Shape("non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn into_policy(&self) -> Result<GaussianPolicy, CheckpointError> {
        self.validate()?;
        let layers = self
            .layers
            .iter()
            .zip(self.weights.iter().zip(self.biases.iter()))
            .map(|(spec, (w, b))| Layer {
                weights: w.clone(),
                bias: b.clone(),
                in_dim: spec.in_dim,
                out_dim: spec.out_dim,
                activation: spec.activation,
            })
            .collect();
        Ok(GaussianPolicy { mlp: Mlp { layers }, log_std: self.log_std.clone() })
    }

    pub fn to_json_string(&self) -> Result<String, CheckpointError> {
        serde_json::to_string_pretty(self).map_err(|e| CheckpointError::Json(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<PolicyCheckpoint, CheckpointError> {
        let ck: PolicyCheckpoint =
            serde_json::from_str(text).map_err(|e| CheckpointError::Json(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PolicyCheckpoint, CheckpointError> {
        let text = std::fs::read_to_string(path)?;
        PolicyCheckpoint::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_policy() -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        GaussianPolicy::new(25, &[16, 8], 6, -0.3, &mut rng)
    }

    #[test]
    fn checkpoint_roundtrip_restores_the_policy() {
        let actor = sample_policy();
        let ck = PolicyCheckpoint::from_policy(&actor, 42, "deadbeef".into());
        let text = ck.to_json_string().unwrap();
        let restored = PolicyCheckpoint::from_json_str(&text).unwrap().into_policy().unwrap();
        assert_eq!(actor.mlp, restored.mlp);
        assert_eq!(actor.log_std, restored.log_std);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let actor = sample_policy();
        let ck = PolicyCheckpoint::from_policy(&actor, 7, "cafe".into());
        let first = ck.to_json_string().unwrap();
        let second = PolicyCheckpoint::from_json_str(&first).unwrap().to_json_string().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn broken_shapes_are_rejected() {
        let actor = sample_policy();
        let mut ck = PolicyCheckpoint::from_policy(&actor, 0, String::new());
        ck.weights[0].pop();
        assert!(matches!(ck.validate(), Err(CheckpointError::Shape(_))));

        let mut ck2 = PolicyCheckpoint::from_policy(&actor, 0, String::new());
        ck2.layers[1].in_dim += 1;
        assert!(ck2.validate().is_err());

        let mut ck3 = PolicyCheckpoint::from_policy(&actor, 0, String::new());
        ck3.version = 99;
        assert!(ck3.validate().is_err());
    }
}
