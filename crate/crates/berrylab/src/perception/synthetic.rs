//! Synthetic detection-stream generator: projects static berries through
//! the pinhole model and corrupts the result with pixel noise, depth noise,
//! and dropout. Stands in for the live segmentation front-end.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, DetectionRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticScene {
    /// Berry centers in the camera frame (meters).
    pub berries: Vec<[f64; 3]>,
    pub frames: u32,
    /// Stamp spacing between frames (s).
    pub frame_dt: f64,
    pub pixel_noise_std: f64,
    pub depth_noise_std: f64,
    /// Per-detection dropout probability in [0, 1).
    pub dropout: f64,
    pub quality_min: f64,
    pub quality_max: f64,
    pub seed: u64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        SyntheticScene {
            berries: vec![
                [0.0, 0.0, 0.70],
                [-0.12, 0.08, 0.60],
                [0.10, -0.10, 0.75],
            ],
            frames: 30,
            frame_dt: 1.0 / 30.0,
            pixel_noise_std: 1.5,
            depth_noise_std: 0.004,
            dropout: 0.0,
            quality_min: 0.85,
            quality_max: 0.97,
            seed: 0,
        }
    }
}

/// Deterministic stream: one record per visible berry per frame, ordered by
/// frame then berry index.
pub fn generate_stream(intr: &CameraIntrinsics, scene: &SyntheticScene) -> Vec<DetectionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mut records = Vec::with_capacity(scene.berries.len() * scene.frames as usize);
    for frame in 0..scene.frames as u64 {
        let stamp = frame as f64 * scene.frame_dt;
        for berry in &scene.berries {
            let p = Vector3::new(berry[0], berry[1], berry[2]);
            let (u0, v0) = intr.project(&p);
            let u = u0 + scene.pixel_noise_std * rng.sample::<f64, _>(StandardNormal);
            let v = v0 + scene.pixel_noise_std * rng.sample::<f64, _>(StandardNormal);
            let depth = p.z + scene.depth_noise_std * rng.sample::<f64, _>(StandardNormal);
            let quality = rng.random_range(scene.quality_min..=scene.quality_max);
            let dropped = scene.dropout > 0.0 && rng.random_range(0.0..1.0) < scene.dropout;
            if dropped {
                continue;
            }
            records.push(DetectionRecord { frame, stamp, u, v, depth, quality });
        }
    }
    records
}
