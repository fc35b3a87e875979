//! Detection-to-target pipeline: pinhole back-projection, quality gating,
//! nearest-track association, buffer-mean smoothing, and the extrinsic
//! transform into the robot frame.
//!
//! Live segmentation is out of scope; the ingestion boundary is a stream of
//! detection records (mask-center pixel, depth, quality), either recorded or
//! produced by [`synthetic::generate_stream`].

pub mod synthetic;

use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("camera intrinsics invalid: {0}")]
    InvalidIntrinsics(String),
    #[error("extrinsic calibration invalid: {0}")]
    InvalidCalibration(String),
    #[error("perception config invalid: {0}")]
    InvalidConfig(String),
    #[error("detection {index}: stamp {stamp} precedes previous stamp {previous}")]
    OutOfOrderStamp { index: usize, stamp: f64, previous: f64 },
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || ![self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite()) {
            return Err(PerceptionError::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx {}, fy {})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Project a camera-frame point back to pixel coordinates (Z > 0).
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// One detection: mask-center pixel plus aligned depth and a quality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub stamp: f64,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub quality: f64,
}

/// Reason a detection was discarded before tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowQuality,
    InvalidDepth,
    OutOfImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateDecision {
    Accept,
    Reject(RejectReason),
}

/// Quality/depth gate: reject when quality <= `min_quality` or the depth is
/// non-finite or outside `depth_range`. Total over all inputs.
pub fn gate_detection(
    det: &DetectionRecord,
    min_quality: f64,
    depth_range: (f64, f64),
) -> GateDecision {
    if !det.depth.is_finite() || det.depth <= depth_range.0 || det.depth >= depth_range.1 {
        return GateDecision::Reject(RejectReason::InvalidDepth);
    }
    if !det.quality.is_finite() || det.quality <= min_quality {
        return GateDecision::Reject(RejectReason::LowQuality);
    }
    GateDecision::Accept
}

/// Pinhole back-projection: `X = (u - cx) Z / fx`, `Y = (v - cy) Z / fy`.
/// Non-positive or non-finite depth is gated out (no output).
pub fn backproject(intr: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Option<Vector3<f64>> {
    if !(z > 0.0) || !z.is_finite() || !u.is_finite() || !v.is_finite() {
        return None;
    }
    Some(Vector3::new(
        (u - intr.cx) * z / intr.fx,
        (v - intr.cy) * z / intr.fy,
        z,
    ))
}

/// A temporally associated fruit hypothesis with its 3D estimate buffer.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub last_center: (f64, f64),
    buffer: VecDeque<Vector3<f64>>,
    capacity: usize,
    pub misses: u32,
}

impl Track {
    pub fn new(id: u64, center: (f64, f64), capacity: usize) -> Track {
        Track {
            id,
            last_center: center,
            buffer: VecDeque::with_capacity(capacity),
            capacity,
            misses: 0,
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
}

/// Smoothed robot-frame target derived from a full track buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub stamp: f64,
    pub track: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TargetPoint {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Nearest active track in the image plane, accepted below `tau_px`.
/// Ties break toward the lower track id, so the result is independent of
/// the iteration order of `tracks`.
pub fn associate<'a>(
    tracks: impl IntoIterator<Item = &'a Track>,
    u: f64,
    v: f64,
    tau_px: f64,
) -> Option<(u64, f64)> {
    let mut best: Option<(u64, f64)> = None;
    for track in tracks {
        let du = u - track.last_center.0;
        let dv = v - track.last_center.1;
        let dist = (du * du + dv * dv).sqrt();
        let better = match best {
            None => true,
            Some((best_id, best_dist)) => {
                dist < best_dist || (dist == best_dist && track.id < best_id)
            }
        };
        if better {
            best = Some((track.id, dist));
        }
    }
    best.filter(|(_, dist)| *dist < tau_px)
}

/// Append a camera-frame estimate; once the buffer is full, emit the
/// componentwise mean. The buffer slides thereafter (oldest evicted), so a
/// full track emits every frame.
pub fn push_and_smooth(track: &mut Track, p: Vector3<f64>) -> Option<Vector3<f64>> {
    if track.buffer.len() == track.capacity {
        track.buffer.pop_front();
    }
    track.buffer.push_back(p);
    if track.buffer.len() == track.capacity {
        let sum: Vector3<f64> = track.buffer.iter().sum();
        Some(sum / track.capacity as f64)
    } else {
        None
    }
}

/// Rigid camera-to-robot calibration as a validated homogeneous transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicCalibration {
    matrix: Matrix4<f64>,
}

impl ExtrinsicCalibration {
    pub fn new(rows: [[f64; 4]; 4]) -> Result<ExtrinsicCalibration, PerceptionError> {
        let m = Matrix4::from_fn(|i, j| rows[i][j]);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(PerceptionError::InvalidCalibration("non-finite entries".into()));
        }
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(PerceptionError::InvalidCalibration(format!(
                "bottom row must be (0, 0, 0, 1), got {bottom:?}"
            )));
        }
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let orth = r.transpose() * r - Matrix3::identity();
        if orth.iter().any(|v| v.abs() > 1e-9) {
            return Err(PerceptionError::InvalidCalibration(
                "rotation block is not orthonormal".into(),
            ));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(PerceptionError::InvalidCalibration(format!(
                "rotation determinant must be +1, got {}",
                r.determinant()
            )));
        }
        Ok(ExtrinsicCalibration { matrix: m })
    }

    pub fn identity() -> ExtrinsicCalibration {
        ExtrinsicCalibration { matrix: Matrix4::identity() }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }
}

/// Homogeneous multiply and drop the unit coordinate.
pub fn to_robot_frame(calib: &ExtrinsicCalibration, p_cam: &Vector3<f64>) -> Vector3<f64> {
    let h = calib.matrix * nalgebra::Vector4::new(p_cam.x, p_cam.y, p_cam.z, 1.0);
    Vector3::new(h.x, h.y, h.z)
}

fn default_tau_px() -> f64 {
    40.0
}
fn default_buffer_len() -> usize {
    15
}
fn default_min_quality() -> f64 {
    0.75
}
fn default_max_misses() -> u32 {
    10
}

/// Perception pipeline settings; intrinsics and extrinsics live in the
/// structured config alongside the gate thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub intrinsics: CameraIntrinsics,
    pub image_width: f64,
    pub image_height: f64,
    /// Camera-to-robot homogeneous transform, row-major.
    pub extrinsic: [[f64; 4]; 4],
    /// Pixel association threshold.
    pub tau_px: f64,
    /// Temporal smoothing buffer length N_b.
    pub buffer_len: usize,
    /// Detections with quality <= this are discarded.
    pub min_quality: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Consecutive unmatched frames before a track is retired.
    pub max_misses: u32,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            intrinsics: CameraIntrinsics { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0 },
            image_width: 640.0,
            image_height: 480.0,
            // Camera 1.35 m above the base, looking straight down over the
            // default workspace box.
            extrinsic: [
                [1.0, 0.0, 0.0, -0.61],
                [0.0, -1.0, 0.0, -0.17],
                [0.0, 0.0, -1.0, 1.35],
                [0.0, 0.0, 0.0, 1.0],
            ],
            tau_px: default_tau_px(),
            buffer_len: default_buffer_len(),
            min_quality: default_min_quality(),
            depth_min: 0.1,
            depth_max: 2.0,
            max_misses: default_max_misses(),
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        self.intrinsics.validate()?;
        ExtrinsicCalibration::new(self.extrinsic)?;
        if self.buffer_len < 1 {
            return Err(PerceptionError::InvalidConfig("buffer_len must be >= 1".into()));
        }
        if !(self.tau_px > 0.0) {
            return Err(PerceptionError::InvalidConfig("tau_px must be positive".into()));
        }
        if !(self.depth_min >= 0.0 && self.depth_max > self.depth_min) {
            return Err(PerceptionError::InvalidConfig(format!(
                "depth range ({}, {}) is not ordered",
                self.depth_min, self.depth_max
            )));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(PerceptionError::InvalidConfig("image size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_quality) {
            return Err(PerceptionError::InvalidConfig("min_quality must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn calibration(&self) -> Result<ExtrinsicCalibration, PerceptionError> {
        ExtrinsicCalibration::new(self.extrinsic)
    }
}

/// Per-detection audit entry from the stream processor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum StreamEvent {
    Rejected { frame: u64, reason: RejectReason },
    TrackStarted { frame: u64, track: u64 },
    TrackRetired { frame: u64, track: u64 },
}

/// Sequential single-consumer processor over one ordered detection stream.
/// Owns the track table; per frame: gate, back-project, associate (one
/// detection per track per frame), smooth, transform.
pub struct StreamProcessor {
    config: PerceptionConfig,
    calibration: ExtrinsicCalibration,
    tracks: Vec<Track>,
    next_track_id: u64,
    last_stamp: f64,
    processed: usize,
    pub events: Vec<StreamEvent>,
}

impl StreamProcessor {
    pub fn new(config: PerceptionConfig) -> Result<StreamProcessor, PerceptionError> {
        config.validate()?;
        let calibration = config.calibration()?;
        Ok(StreamProcessor {
            config,
            calibration,
            tracks: Vec::new(),
            next_track_id: 0,
            last_stamp: f64::NEG_INFINITY,
            processed: 0,
            events: Vec::new(),
        })
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Process every record of one frame; records must share the frame id.
    pub fn process_frame(
        &mut self,
        detections: &[DetectionRecord],
    ) -> Result<Vec<TargetPoint>, PerceptionError> {
        let mut targets = Vec::new();
        let mut matched: Vec<u64> = Vec::new();
        let frame = detections.first().map(|d| d.frame).unwrap_or(0);
        for det in detections {
            if det.stamp < self.last_stamp {
                return Err(PerceptionError::OutOfOrderStamp {
                    index: self.processed,
                    stamp: det.stamp,
                    previous: self.last_stamp,
                });
            }
            self.last_stamp = det.stamp;
            self.processed += 1;

            if det.u < 0.0
                || det.v < 0.0
                || det.u >= self.config.image_width
                || det.v >= self.config.image_height
                || !det.u.is_finite()
                || !det.v.is_finite()
            {
                self.events.push(StreamEvent::Rejected { frame: det.frame, reason: RejectReason::OutOfImage });
                continue;
            }
            match gate_detection(det, self.config.min_quality, (self.config.depth_min, self.config.depth_max)) {
                GateDecision::Reject(reason) => {
                    self.events.push(StreamEvent::Rejected { frame: det.frame, reason });
                    continue;
                }
                GateDecision::Accept => {}
            }
            let Some(p_cam) = backproject(&self.config.intrinsics, det.u, det.v, det.depth) else {
                self.events.push(StreamEvent::Rejected { frame: det.frame, reason: RejectReason::InvalidDepth });
                continue;
            };

            // One detection may claim each track per frame; later detections
            // see only the still-unclaimed tracks.
            let candidates = self.tracks.iter().filter(|t| !matched.contains(&t.id));
            let track_id = match associate(candidates, det.u, det.v, self.config.tau_px) {
                Some((id, _)) => id,
                None => {
                    let id = self.next_track_id;
                    self.next_track_id += 1;
                    self.tracks.push(Track::new(id, (det.u, det.v), self.config.buffer_len));
                    self.events.push(StreamEvent::TrackStarted { frame: det.frame, track: id });
                    id
                }
            };
            matched.push(track_id);
            let track = self.tracks.iter_mut().find(|t| t.id == track_id).unwrap();
            track.last_center = (det.u, det.v);
            track.misses = 0;
            if let Some(mean_cam) = push_and_smooth(track, p_cam) {
                let p_robot = to_robot_frame(&self.calibration, &mean_cam);
                targets.push(TargetPoint {
                    stamp: det.stamp,
                    track: track_id,
                    x: p_robot.x,
                    y: p_robot.y,
                    z: p_robot.z,
                });
            }
        }
        // Tracks that saw no detection this frame accrue a miss.
        if !detections.is_empty() {
            for track in self.tracks.iter_mut() {
                if !matched.contains(&track.id) {
                    track.misses += 1;
                }
            }
            let max_misses = self.config.max_misses;
            let events = &mut self.events;
            self.tracks.retain(|t| {
                let keep = t.misses < max_misses;
                if !keep {
                    events.push(StreamEvent::TrackRetired { frame, track: t.id });
                }
                keep
            });
        }
        Ok(targets)
    }
}

/// Run a whole ordered stream: groups consecutive records by frame id and
/// feeds each frame through the processor. Returns all emitted targets.
pub fn process_stream(
    detections: &[DetectionRecord],
    config: PerceptionConfig,
) -> Result<(Vec<TargetPoint>, Vec<StreamEvent>), PerceptionError> {
    let mut processor = StreamProcessor::new(config)?;
    let mut targets = Vec::new();
    let mut start = 0;
    while start < detections.len() {
        let frame = detections[start].frame;
        let end = detections[start..]
            .iter()
            .position(|d| d.frame != frame)
            .map(|off| start + off)
            .unwrap_or(detections.len());
        targets.extend(processor.process_frame(&detections[start..end])?);
        start = end;
    }
    Ok((targets, processor.events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0 }
    }

    #[test]
    fn backproject_principal_point() {
        let p = backproject(&intr(), 320.0, 240.0, 0.8).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 0.8));
    }

    #[test]
    fn backproject_worked_example() {
        // fx = fy = 600, cx = 320, cy = 240, u = 620, v = 240, Z = 0.5.
        let p = backproject(&intr(), 620.0, 240.0, 0.5).unwrap();
        assert_relative_eq!(p.x, 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 0.5, epsilon = 1e-12);
        // Cross-check by re-projecting.
        let (u, v) = intr().project(&p);
        assert_relative_eq!(u, 620.0, epsilon = 1e-9);
        assert_relative_eq!(v, 240.0, epsilon = 1e-9);
    }

    #[test]
    fn backproject_scales_linearly_with_depth() {
        let a = backproject(&intr(), 500.0, 100.0, 0.4).unwrap();
        let b = backproject(&intr(), 500.0, 100.0, 0.8).unwrap();
        assert_relative_eq!(b.x, 2.0 * a.x, epsilon = 1e-12);
        assert_relative_eq!(b.y, 2.0 * a.y, epsilon = 1e-12);
    }

    #[test]
    fn backproject_gates_bad_depth() {
        assert!(backproject(&intr(), 10.0, 10.0, 0.0).is_none());
        assert!(backproject(&intr(), 10.0, 10.0, -0.3).is_none());
        assert!(backproject(&intr(), 10.0, 10.0, f64::NAN).is_none());
    }

    #[test]
    fn roundtrip_error_below_picopixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = rng.random_range(0.0..640.0);
            let v = rng.random_range(0.0..480.0);
            let z = rng.random_range(0.1..2.0);
            let p = backproject(&intr(), u, v, z).unwrap();
            let (u2, v2) = intr().project(&p);
            assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9);
        }
    }

    fn det(frame: u64, stamp: f64, u: f64, v: f64, depth: f64, quality: f64) -> DetectionRecord {
        DetectionRecord { frame, stamp, u, v, depth, quality }
    }

    #[test]
    fn gate_rejects_exact_threshold_quality() {
        let d = det(0, 0.0, 10.0, 10.0, 0.6, 0.75);
        assert_eq!(
            gate_detection(&d, 0.75, (0.1, 2.0)),
            GateDecision::Reject(RejectReason::LowQuality)
        );
    }

    #[test]
    fn gate_rejects_nan_depth() {
        let d = det(0, 0.0, 10.0, 10.0, f64::NAN, 0.9);
        assert_eq!(
            gate_detection(&d, 0.75, (0.1, 2.0)),
            GateDecision::Reject(RejectReason::InvalidDepth)
        );
    }

    #[test]
    fn gate_accepts_good_detection() {
        let d = det(0, 0.0, 10.0, 10.0, 0.6, 0.9);
        assert_eq!(gate_detection(&d, 0.75, (0.1, 2.0)), GateDecision::Accept);
    }

    #[test]
    fn associate_empty_set_starts_new_track() {
        assert!(associate([].iter(), 100.0, 100.0, 40.0).is_none());
    }

    #[test]
    fn associate_within_threshold() {
        let tracks = vec![Track::new(0, (100.0, 100.0), 15)];
        let (id, dist) = associate(&tracks, 103.0, 104.0, 40.0).unwrap();
        assert_eq!(id, 0);
        assert_relative_eq!(dist, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn associate_prefers_nearest_then_lower_id() {
        let mut tracks = vec![
            Track::new(0, (110.0, 100.0), 15), // distance 10
            Track::new(1, (112.0, 100.0), 15), // distance 12
        ];
        let (id, dist) = associate(&tracks, 100.0, 100.0, 40.0).unwrap();
        assert_eq!((id, dist), (0, 10.0));
        // Reordering must not change the winner.
        tracks.reverse();
        let (id2, _) = associate(&tracks, 100.0, 100.0, 40.0).unwrap();
        assert_eq!(id2, 0);
        // Exact tie: lower id wins regardless of order.
        let tied = vec![Track::new(7, (110.0, 100.0), 15), Track::new(2, (90.0, 100.0), 15)];
        let (tie_id, _) = associate(&tied, 100.0, 100.0, 40.0).unwrap();
        assert_eq!(tie_id, 2);
    }

    #[test]
    fn smoothing_emits_only_on_full_buffer() {
        let mut track = Track::new(0, (0.0, 0.0), 15);
        let p = Vector3::new(0.1, -0.2, 0.6);
        for i in 0..14 {
            assert!(push_and_smooth(&mut track, p).is_none(), "emitted at {i}");
        }
        let mean = push_and_smooth(&mut track, p).unwrap();
        assert_relative_eq!((mean - p).norm(), 0.0, epsilon = 1e-12);
        // Sliding window keeps emitting afterwards.
        assert!(push_and_smooth(&mut track, p).is_some());
    }

    #[test]
    fn smoothing_mean_is_order_invariant_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = Vector3::new(0.2, 0.1, 0.7);
        let noise_std = 0.01;
        let mut hits = 0;
        let trials = 500;
        for _ in 0..trials {
            let mut points: Vec<Vector3<f64>> = (0..15)
                .map(|_| {
                    base + Vector3::new(
                        noise_std * gauss(&mut rng),
                        noise_std * gauss(&mut rng),
                        noise_std * gauss(&mut rng),
                    )
                })
                .collect();
            let mut track = Track::new(0, (0.0, 0.0), 15);
            let mut mean = None;
            for p in &points {
                mean = push_and_smooth(&mut track, *p);
            }
            let mean = mean.unwrap();
            // Order invariance of the full-buffer mean.
            points.reverse();
            let mut track2 = Track::new(1, (0.0, 0.0), 15);
            let mut mean2 = None;
            for p in &points {
                mean2 = push_and_smooth(&mut track2, *p);
            }
            assert_relative_eq!((mean - mean2.unwrap()).norm(), 0.0, epsilon = 1e-12);
            if (mean - base).norm() <= 4.0 * noise_std / (15.0f64).sqrt() {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.99 * trials as f64, "only {hits}/{trials} within bound");
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    #[test]
    fn to_robot_frame_identity_and_translation() {
        let p = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(to_robot_frame(&ExtrinsicCalibration::identity(), &p), p);
        let t = ExtrinsicCalibration::new([
            [1.0, 0.0, 0.0, 0.1],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(to_robot_frame(&t, &p), p + Vector3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn rigid_transform_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let angle = rng.random_range(-3.0..3.0);
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64) + 1.1,
            ));
            let rot = nalgebra::Rotation3::from_axis_angle(&axis, angle);
            let mut rows = [[0.0; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    rows[i][j] = rot[(i, j)];
                }
                rows[i][3] = rng.random_range(-1.0..1.0);
            }
            rows[3] = [0.0, 0.0, 0.0, 1.0];
            let calib = ExtrinsicCalibration::new(rows).unwrap();
            let p = Vector3::new(rng.random_range(-1.0..1.0), 0.3, 0.5);
            let q = Vector3::new(0.2, rng.random_range(-1.0..1.0), -0.4);
            let dist_before = (p - q).norm();
            let dist_after = (to_robot_frame(&calib, &p) - to_robot_frame(&calib, &q)).norm();
            assert_relative_eq!(dist_before, dist_after, epsilon = 1e-9);
        }
    }

    #[test]
    fn reflection_is_rejected() {
        let rows = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        assert!(ExtrinsicCalibration::new(rows).is_err());
        let bad_bottom = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.1, 1.0],
        ];
        assert!(ExtrinsicCalibration::new(bad_bottom).is_err());
    }

    #[test]
    fn single_berry_emits_exactly_once_at_buffer_fill() {
        let config = PerceptionConfig::default();
        let mut detections = Vec::new();
        for f in 0..15u64 {
            detections.push(det(f, f as f64 * 0.1, 320.0, 240.0, 0.6, 0.9));
        }
        let (targets, _) = process_stream(&detections, config).unwrap();
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].track, 0);
        assert_relative_eq!(targets[0].stamp, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn two_distant_berries_form_two_tracks() {
        let config = PerceptionConfig::default();
        let mut detections = Vec::new();
        for f in 0..20u64 {
            let stamp = f as f64 * 0.1;
            detections.push(det(f, stamp, 150.0, 120.0, 0.5, 0.9));
            detections.push(det(f, stamp, 480.0, 360.0, 0.7, 0.92));
        }
        let (targets, events) = process_stream(&detections, config).unwrap();
        let track_ids: std::collections::BTreeSet<u64> = targets.iter().map(|t| t.track).collect();
        assert_eq!(track_ids.len(), 2);
        let started = events
            .iter()
            .filter(|e| matches!(e, StreamEvent::TrackStarted { .. }))
            .count();
        assert_eq!(started, 2);
    }

    #[test]
    fn empty_stream_is_empty_output() {
        let (targets, events) = process_stream(&[], PerceptionConfig::default()).unwrap();
        assert!(targets.is_empty());
        assert!(events.is_empty());
    }

    #[test]
    fn out_of_order_stamps_error() {
        let detections = vec![
            det(0, 1.0, 320.0, 240.0, 0.6, 0.9),
            det(1, 0.5, 320.0, 240.0, 0.6, 0.9),
        ];
        assert!(matches!(
            process_stream(&detections, PerceptionConfig::default()),
            Err(PerceptionError::OutOfOrderStamp { .. })
        ));
    }

    #[test]
    fn stale_tracks_are_retired() {
        let mut config = PerceptionConfig::default();
        config.max_misses = 3;
        config.buffer_len = 100; // never emits; we only watch the table
        let mut processor = StreamProcessor::new(config).unwrap();
        processor
            .process_frame(&[det(0, 0.0, 100.0, 100.0, 0.5, 0.9)])
            .unwrap();
        assert_eq!(processor.active_tracks().len(), 1);
        for f in 1..=3u64 {
            processor
                .process_frame(&[det(f, f as f64, 600.0, 400.0, 0.5, 0.9)])
                .unwrap();
        }
        assert!(processor.active_tracks().iter().all(|t| t.id != 0));
        assert!(processor
            .events
            .iter()
            .any(|e| matches!(e, StreamEvent::TrackRetired { track: 0, .. })));
    }

    #[test]
    fn track_count_bounded_by_sources() {
        // Noisy berries plus an occasional spurious low-quality detection:
        // the gate drops the junk and the count stays at the berry count.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let config = PerceptionConfig::default();
        let berries = [(200.0, 200.0, 0.5), (420.0, 300.0, 0.7)];
        let mut detections = Vec::new();
        for f in 0..40u64 {
            let stamp = f as f64 / 30.0;
            for &(u, v, z) in &berries {
                detections.push(det(
                    f,
                    stamp,
                    u + rng.random_range(-2.0..2.0),
                    v + rng.random_range(-2.0..2.0),
                    z + rng.random_range(-0.01..0.01),
                    0.9,
                ));
            }
            if f % 7 == 0 {
                detections.push(det(f, stamp, 50.0, 50.0, 0.4, 0.3)); // gated out
            }
        }
        let (_, events) = process_stream(&detections, config).unwrap();
        let started = events
            .iter()
            .filter(|e| matches!(e, StreamEvent::TrackStarted { .. }))
            .count();
        assert_eq!(started, berries.len());
    }
}
