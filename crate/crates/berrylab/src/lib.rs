//! Desk-scale laboratory for learned strawberry-harvest reaching: a
//! goal-conditioned PPO policy trained on a kinematic 6-DOF arm, a
//! detection-to-3D-target perception pipeline, a time-parameterized command
//! streamer with a harvesting phase machine, and trajectory-smoothness and
//! task-success analytics.
//!
//! The `berrylab` binary ties the pieces together; see the crate README for
//! the CLI surface and file formats.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod perception;
pub mod ppo;
pub mod sim;
pub mod streamer;

pub use config::{ConfigError, RootConfig};
