//! Trajectory-quality and task-success analytics: resampling onto a uniform
//! grid, moving-average smoothing, RDP simplification, jerk statistics, and
//! reach/harvest success rates.

use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonMonotonicTime { index: usize },
    #[error("metrics config invalid: {0}")]
    InvalidConfig(String),
    #[error("resampling would produce {samples} samples (limit {limit}); check timestamps and resample_rate")]
    ResampleTooLarge { samples: u128, limit: u64 },
    #[error("success rate undefined for an empty record set")]
    EmptyRecords,
    #[error("record {attempt}: stage flags must satisfy deposited => detached => grasped")]
    StageFlags { attempt: u64 },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("json line {line}: {message}")]
    Json { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Timestamped Cartesian samples of one labeled motion segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub label: String,
    pub samples: Vec<(f64, Vector3<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Uniform resampling rate (Hz).
    pub resample_rate: f64,
    /// Moving-average window (odd sample count).
    pub ma_window: usize,
    /// RDP tolerance (m) for path-length estimation.
    pub rdp_epsilon: f64,
    /// Percentile q for the robust peak jerk.
    pub jerk_percentile: f64,
    /// Leading/trailing samples slower than this (m/s) are trimmed so
    /// durations reflect active motion only.
    pub stillness_speed: f64,
    /// Reach tolerance used for success reporting (m).
    pub reach_eps: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            resample_rate: 100.0,
            ma_window: 9,
            rdp_epsilon: 0.002,
            jerk_percentile: 99.0,
            stillness_speed: 0.001,
            reach_eps: 0.02,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.resample_rate > 0.0) {
            return Err(MetricsError::InvalidConfig("resample_rate must be positive".into()));
        }
        if self.ma_window == 0 || self.ma_window % 2 == 0 {
            return Err(MetricsError::InvalidConfig(format!(
                "ma_window must be odd and positive, got {}",
                self.ma_window
            )));
        }
        if self.rdp_epsilon < 0.0 {
            return Err(MetricsError::InvalidConfig("rdp_epsilon must be non-negative".into()));
        }
        if !(self.jerk_percentile > 0.0 && self.jerk_percentile < 100.0) {
            return Err(MetricsError::InvalidConfig("jerk_percentile must be in (0, 100)".into()));
        }
        if self.stillness_speed < 0.0 || !(self.reach_eps > 0.0) {
            return Err(MetricsError::InvalidConfig(
                "stillness_speed must be >= 0 and reach_eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Uniformly sampled series: `t(i) = t0 + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    pub t0: f64,
    pub dt: f64,
    pub points: Vec<Vector3<f64>>,
}

impl UniformSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }
}

/// Motion-quality statistics of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub duration: f64,
    pub straight_distance: f64,
    pub traj_length: f64,
    pub mean_speed: f64,
    pub rms_jerk: f64,
    pub peak_jerk_robust: f64,
}

/// One reach/harvest attempt and its stage outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRecord {
    pub attempt: u64,
    pub final_distance: f64,
    pub reached_in_time: bool,
    #[serde(default)]
    pub grasped: bool,
    #[serde(default)]
    pub detached: bool,
    #[serde(default)]
    pub deposited: bool,
}

impl SuccessRecord {
    /// Stage flags are monotone: deposited implies detached implies grasped.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let ok = (!self.deposited || self.detached) && (!self.detached || self.grasped);
        if ok {
            Ok(())
        } else {
            Err(MetricsError::StageFlags { attempt: self.attempt })
        }
    }
}

/// Linear interpolation onto a uniform grid spanning the log, then a
/// centered moving average whose window shrinks symmetrically at the edges
/// (affine segments pass through unchanged at every index).
pub fn resample_and_smooth(
    log: &TrajectoryLog,
    config: &MetricsConfig,
) -> Result<UniformSeries, MetricsError> {
    config.validate()?;
    let samples = &log.samples;
    if samples.len() < 2 {
        return Err(MetricsError::TooFewSamples { have: samples.len(), need: 2 });
    }
    for (i, pair) in samples.windows(2).enumerate() {
        if !(pair[1].0 > pair[0].0) {
            return Err(MetricsError::NonMonotonicTime { index: i + 1 });
        }
    }
    let dt = 1.0 / config.resample_rate;
    let t0 = samples[0].0;
    let t_end = samples[samples.len() - 1].0;
    if !t0.is_finite() || !t_end.is_finite() {
        return Err(MetricsError::NonMonotonicTime { index: 0 });
    }
    // Bound the grid before allocating; hostile logs can span absurd times.
    const MAX_SAMPLES: u64 = 1 << 24;
    let estimated = ((t_end - t0) / dt + 1.0).floor();
    if !(estimated >= 1.0) || estimated as u128 > MAX_SAMPLES as u128 {
        return Err(MetricsError::ResampleTooLarge {
            samples: estimated.max(0.0) as u128,
            limit: MAX_SAMPLES,
        });
    }
    let n = (((t_end - t0) / dt) + 1e-9).floor() as usize + 1;

    let mut resampled = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        while cursor + 2 < samples.len() && samples[cursor + 1].0 < t {
            cursor += 1;
        }
        let (ta, pa) = samples[cursor];
        let (tb, pb) = samples[cursor + 1];
        let alpha = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        resampled.push(pa + (pb - pa) * alpha);
    }

    let half = config.ma_window / 2;
    let mut smoothed = Vec::with_capacity(n);
    for i in 0..n {
        let reach = half.min(i).min(n - 1 - i);
        let window = &resampled[i - reach..=i + reach];
        let sum: Vector3<f64> = window.iter().sum();
        smoothed.push(sum / window.len() as f64);
    }
    Ok(UniformSeries { t0, dt, points: smoothed })
}

/// Drop leading/trailing samples whose speed is below the stillness
/// threshold, so durations reflect active motion. If nothing moves (or the
/// active span is degenerate), the series is returned unchanged.
pub fn trim_stillness(series: &UniformSeries, threshold: f64) -> UniformSeries {
    let n = series.len();
    if n < 3 || threshold <= 0.0 {
        return series.clone();
    }
    let speed = |i: usize| -> f64 {
        let p = &series.points;
        if i == 0 {
            (p[1] - p[0]).norm() / series.dt
        } else if i == n - 1 {
            (p[n - 1] - p[n - 2]).norm() / series.dt
        } else {
            (p[i + 1] - p[i - 1]).norm() / (2.0 * series.dt)
        }
    };
    let first = (0..n).find(|&i| speed(i) >= threshold);
    let last = (0..n).rev().find(|&i| speed(i) >= threshold);
    match (first, last) {
        (Some(lo), Some(hi)) if hi > lo + 2 => UniformSeries {
            t0: series.time_at(lo),
            dt: series.dt,
            points: series.points[lo..=hi].to_vec(),
        },
        _ => series.clone(),
    }
}

/// Ramer-Douglas-Peucker simplification with segment-distance deviation.
/// Endpoints are preserved; the output is a subsequence of the input; zero
/// tolerance returns the input unchanged.
pub fn rdp_simplify(points: &[Vector3<f64>], epsilon: f64) -> Vec<Vector3<f64>> {
    if epsilon == 0.0 || points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    rdp_mark(points, 0, points.len() - 1, epsilon, &mut keep);
    points
        .iter()
        .zip(keep.iter())
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

fn rdp_mark(points: &[Vector3<f64>], lo: usize, hi: usize, epsilon: f64, keep: &mut [bool]) {
    if hi <= lo + 1 {
        return;
    }
    let mut max_dist = 0.0;
    let mut max_idx = lo;
    for i in lo + 1..hi {
        let d = point_segment_distance(&points[i], &points[lo], &points[hi]);
        if d > max_dist {
            max_dist = d;
            max_idx = i;
        }
    }
    if max_dist > epsilon {
        keep[max_idx] = true;
        rdp_mark(points, lo, max_idx, epsilon, keep);
        rdp_mark(points, max_idx, hi, epsilon, keep);
    }
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Linearly interpolated q-th percentile; monotone in q and never above the
/// maximum. `values` need not be sorted.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn central_derivative(points: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    points
        .windows(3)
        .map(|w| (w[2] - w[0]) / (2.0 * dt))
        .collect()
}

/// Jerk magnitudes from three central-difference passes over the smoothed
/// series, restricted to the region where the full moving-average window
/// applied. Returns the magnitudes and the series index of the first one.
///
/// One-sided edge stencils are deliberately avoided: iterated, they corrupt
/// the boundary jerk samples by orders of magnitude more than the interior
/// truncation error.
pub fn jerk_magnitudes(series: &UniformSeries, ma_window: usize) -> (Vec<f64>, usize) {
    let n = series.len();
    if n < 7 {
        return (Vec::new(), 0);
    }
    let half = ma_window / 2;
    // Three central passes shrink by 3 per side; add the MA transition
    // margin, reduced proportionally when the series is short.
    let margin = half.min((n - 7) / 2);
    let velocity = central_derivative(&series.points, series.dt);
    let acceleration = central_derivative(&velocity, series.dt);
    let jerk = central_derivative(&acceleration, series.dt);
    let magnitudes: Vec<f64> = jerk[margin..jerk.len() - margin]
        .iter()
        .map(|j| j.norm())
        .collect();
    (magnitudes, 3 + margin)
}

/// Metrics over a smoothed uniform series and its simplified polyline:
/// `T`, straight-line `D`, path length `L` over the polyline, `v = L/T`,
/// RMS jerk, and the robust percentile peak jerk.
pub fn segment_metrics(
    series: &UniformSeries,
    simplified: &[Vector3<f64>],
    config: &MetricsConfig,
) -> Result<SegmentMetrics, MetricsError> {
    config.validate()?;
    let n = series.len();
    if n < 4 {
        return Err(MetricsError::TooFewSamples { have: n, need: 4 });
    }
    let duration = series.duration();
    let straight_distance = (series.points[n - 1] - series.points[0]).norm();
    let traj_length: f64 = simplified.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let mean_speed = traj_length / duration;
    let (jerk, _) = jerk_magnitudes(series, config.ma_window);
    let (rms_jerk, peak_jerk_robust) = if jerk.is_empty() {
        (0.0, 0.0)
    } else {
        let rms = (jerk.iter().map(|j| j * j).sum::<f64>() / jerk.len() as f64).sqrt();
        (rms, percentile(&jerk, config.jerk_percentile))
    };
    Ok(SegmentMetrics {
        duration,
        straight_distance,
        traj_length,
        mean_speed,
        rms_jerk,
        peak_jerk_robust,
    })
}

/// Full analysis of one segment log: resample, smooth, trim stillness,
/// simplify, and compute metrics.
#[derive(Debug, Clone)]
pub struct SegmentAnalysis {
    pub metrics: SegmentMetrics,
    pub series: UniformSeries,
    pub simplified: Vec<Vector3<f64>>,
}

pub fn analyze_log(
    log: &TrajectoryLog,
    config: &MetricsConfig,
) -> Result<SegmentAnalysis, MetricsError> {
    let smoothed = resample_and_smooth(log, config)?;
    let trimmed = trim_stillness(&smoothed, config.stillness_speed);
    let simplified = rdp_simplify(&trimmed.points, config.rdp_epsilon);
    let metrics = segment_metrics(&trimmed, &simplified, config)?;
    Ok(SegmentAnalysis { metrics, series: trimmed, simplified })
}

/// Percentage of attempts whose final distance is within `eps_r` and which
/// reached the target before timeout.
pub fn reach_success_rate(records: &[SuccessRecord], eps_r: f64) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let hits = records
        .iter()
        .filter(|r| r.final_distance <= eps_r && r.reached_in_time)
        .count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

/// Percentage of attempts with all three stage flags set.
pub fn harvest_success_rate(records: &[SuccessRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let hits = records
        .iter()
        .filter(|r| r.grasped && r.detached && r.deposited)
        .count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

/// Mean and standard deviation aggregates of segment metrics per label,
/// matching the report table structure.
#[derive(Debug, Clone, Serialize)]
pub struct LabelSummary {
    pub label: String,
    pub count: usize,
    pub duration_mean: f64,
    pub duration_std: f64,
    pub straight_mean: f64,
    pub straight_std: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub rms_jerk_mean: f64,
    pub rms_jerk_std: f64,
    pub peak_jerk_mean: f64,
    pub peak_jerk_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group per-segment metrics by label (sorted) into mean +/- std rows.
pub fn summarize(segments: &[(String, SegmentMetrics)]) -> Vec<LabelSummary> {
    let mut labels: Vec<&String> = segments.iter().map(|(l, _)| l).collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .map(|label| {
            let rows: Vec<&SegmentMetrics> =
                segments.iter().filter(|(l, _)| l == label).map(|(_, m)| m).collect();
            let collect = |f: fn(&SegmentMetrics) -> f64| -> Vec<f64> {
                rows.iter().map(|m| f(m)).collect()
            };
            let (duration_mean, duration_std) = mean_std(&collect(|m| m.duration));
            let (straight_mean, straight_std) = mean_std(&collect(|m| m.straight_distance));
            let (length_mean, length_std) = mean_std(&collect(|m| m.traj_length));
            let (speed_mean, speed_std) = mean_std(&collect(|m| m.mean_speed));
            let (rms_jerk_mean, rms_jerk_std) = mean_std(&collect(|m| m.rms_jerk));
            let (peak_jerk_mean, peak_jerk_std) = mean_std(&collect(|m| m.peak_jerk_robust));
            LabelSummary {
                label: label.clone(),
                count: rows.len(),
                duration_mean,
                duration_std,
                straight_mean,
                straight_std,
                length_mean,
                length_std,
                speed_mean,
                speed_std,
                rms_jerk_mean,
                rms_jerk_std,
                peak_jerk_mean,
                peak_jerk_std,
            }
        })
        .collect()
}

/// Parse a trajectory CSV with header `t,x,y,z,segment_label`. Consecutive
/// rows sharing a label form one segment. Malformed rows are reported with
/// their line number.
pub fn read_trajectory_csv(reader: impl Read) -> Result<Vec<TrajectoryLog>, MetricsError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv_reader.headers().map_err(csv_error)?;
        let expected = ["t", "x", "y", "z", "segment_label"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected {
            return Err(MetricsError::Csv {
                line: 1,
                message: format!("header must be {expected:?}, got {got:?}"),
            });
        }
    }
    let mut logs: Vec<TrajectoryLog> = Vec::new();
    for result in csv_reader.records() {
        let record = result.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 5 {
            return Err(MetricsError::Csv {
                line,
                message: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let parse = |idx: usize, name: &str| -> Result<f64, MetricsError> {
            record[idx].trim().parse::<f64>().map_err(|e| MetricsError::Csv {
                line,
                message: format!("bad {name} value {:?}: {e}", &record[idx]),
            })
        };
        let t = parse(0, "t")?;
        let p = Vector3::new(parse(1, "x")?, parse(2, "y")?, parse(3, "z")?);
        if !t.is_finite() || !p.iter().all(|v| v.is_finite()) {
            return Err(MetricsError::Csv { line, message: "non-finite sample".into() });
        }
        let label = record[4].trim().to_string();
        match logs.last_mut() {
            Some(last) if last.label == label => last.samples.push((t, p)),
            _ => logs.push(TrajectoryLog { label, samples: vec![(t, p)] }),
        }
    }
    Ok(logs)
}

fn csv_error(e: csv::Error) -> MetricsError {
    let line = match e.position() {
        Some(pos) => pos.line(),
        None => 0,
    };
    MetricsError::Csv { line, message: e.to_string() }
}

pub fn write_trajectory_csv(
    mut writer: impl Write,
    logs: &[TrajectoryLog],
) -> Result<(), MetricsError> {
    writeln!(writer, "t,x,y,z,segment_label")?;
    for log in logs {
        for (t, p) in &log.samples {
            writeln!(writer, "{t},{},{},{},{}", p.x, p.y, p.z, log.label)?;
        }
    }
    Ok(())
}

/// Parse success records from line-delimited JSON, enforcing the stage-flag
/// monotonicity invariant per record.
pub fn read_success_records(reader: impl Read) -> Result<Vec<SuccessRecord>, MetricsError> {
    let mut records = Vec::new();
    for (i, line) in std::io::BufRead::lines(std::io::BufReader::new(reader)).enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SuccessRecord = serde_json::from_str(&line).map_err(|e| MetricsError::Json {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config() -> MetricsConfig {
        MetricsConfig::default()
    }

    fn line_log(v: f64, t_end: f64, n: usize) -> TrajectoryLog {
        let samples = (0..n)
            .map(|i| {
                let t = t_end * i as f64 / (n - 1) as f64;
                (t, Vector3::new(v * t, 0.0, 0.0))
            })
            .collect();
        TrajectoryLog { label: "test".into(), samples }
    }

    #[test]
    fn constant_trajectory_is_a_fixed_point() {
        let p = Vector3::new(0.1, 0.2, 0.3);
        let log = TrajectoryLog {
            label: "still".into(),
            samples: (0..20).map(|i| (i as f64 * 0.05, p)).collect(),
        };
        let series = resample_and_smooth(&log, &config()).unwrap();
        for q in &series.points {
            assert_relative_eq!((q - p).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_trajectory_passes_through_everywhere() {
        let log = line_log(0.3, 2.0, 17);
        let series = resample_and_smooth(&log, &config()).unwrap();
        for (i, p) in series.points.iter().enumerate() {
            let t = series.time_at(i);
            assert_relative_eq!(p.x, 0.3 * t, epsilon = 1e-9);
        }
    }

    #[test]
    fn grid_spacing_is_exact() {
        // Irregular timestamps of a sine path.
        let samples: Vec<(f64, Vector3<f64>)> = [0.0, 0.13, 0.21, 0.4, 0.55, 0.8, 1.0, 1.28]
            .iter()
            .map(|&t: &f64| (t, Vector3::new((2.0 * t).sin(), 0.0, 0.0)))
            .collect();
        let log = TrajectoryLog { label: "sine".into(), samples };
        let series = resample_and_smooth(&log, &config()).unwrap();
        assert_relative_eq!(series.dt, 0.01, epsilon = 1e-15);
        assert_eq!(series.len(), 129);
        assert!(series.time_at(series.len() - 1) <= 1.28 + 1e-9);
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let log = TrajectoryLog {
            label: "dup".into(),
            samples: vec![
                (0.0, Vector3::zeros()),
                (0.1, Vector3::zeros()),
                (0.1, Vector3::zeros()),
            ],
        };
        assert!(matches!(
            resample_and_smooth(&log, &config()),
            Err(MetricsError::NonMonotonicTime { index: 2 })
        ));
    }

    #[test]
    fn rdp_collinear_collapses_to_endpoints() {
        let points: Vec<Vector3<f64>> =
            (0..50).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let simplified = rdp_simplify(&points, 0.001);
        assert_eq!(simplified.len(), 2);
        assert_eq!(simplified[0], points[0]);
        assert_eq!(simplified[1], points[49]);
    }

    #[test]
    fn rdp_keeps_a_sharp_corner() {
        let mut points = Vec::new();
        for i in 0..=10 {
            points.push(Vector3::new(i as f64 * 0.1, 0.0, 0.0));
        }
        for i in 1..=10 {
            points.push(Vector3::new(1.0, i as f64 * 0.1, 0.0));
        }
        let simplified = rdp_simplify(&points, 0.01);
        assert_eq!(simplified.len(), 3);
        assert_relative_eq!((simplified[1] - Vector3::new(1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rdp_zero_epsilon_is_identity() {
        let points: Vec<Vector3<f64>> = (0..30)
            .map(|i| Vector3::new(i as f64, (i as f64).sin(), 0.0))
            .collect();
        assert_eq!(rdp_simplify(&points, 0.0), points);
    }

    #[test]
    fn rdp_output_is_subsequence_and_within_tolerance() {
        let points: Vec<Vector3<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 / 199.0;
                Vector3::new(t, (6.0 * t).sin() * 0.2, (4.0 * t).cos() * 0.1)
            })
            .collect();
        let eps = 0.01;
        let simplified = rdp_simplify(&points, eps);
        // Subsequence check.
        let mut cursor = 0;
        for p in &simplified {
            cursor += points[cursor..].iter().position(|q| q == p).expect("not a subsequence") + 1;
        }
        // Every removed point lies within eps of the simplified polyline.
        for p in &points {
            let dist = simplified
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(dist <= eps + 1e-12);
        }
    }

    #[test]
    fn straight_constant_velocity_fixture() {
        let log = line_log(0.25, 4.0, 81);
        let analysis = analyze_log(&log, &config()).unwrap();
        let m = analysis.metrics;
        assert_relative_eq!(m.duration, 4.0, epsilon = 1e-9);
        assert_relative_eq!(m.straight_distance, 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.traj_length, 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.mean_speed, 0.25, epsilon = 1e-9);
        assert!(m.rms_jerk < 1e-6);
    }

    fn quintic_log(rate: f64) -> TrajectoryLog {
        let n = (rate as usize) + 1;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let s = 10.0 * t.powi(3) - 15.0 * t.powi(4) + 6.0 * t.powi(5);
                (t, Vector3::new(s, 0.0, 0.0))
            })
            .collect();
        TrajectoryLog { label: "quintic".into(), samples }
    }

    #[test]
    fn quintic_jerk_matches_analytic_profile() {
        let mut cfg = config();
        cfg.resample_rate = 200.0;
        let log = quintic_log(200.0);
        let smoothed = resample_and_smooth(&log, &cfg).unwrap();
        let trimmed = trim_stillness(&smoothed, cfg.stillness_speed);
        let (jerk, offset) = jerk_magnitudes(&trimmed, cfg.ma_window);
        assert!(!jerk.is_empty());
        let mut err_sq = 0.0;
        let mut ref_sq = 0.0;
        for (k, j) in jerk.iter().enumerate() {
            let t = trimmed.time_at(offset + k);
            let analytic = (60.0 - 360.0 * t + 360.0 * t * t).abs();
            err_sq += (j - analytic) * (j - analytic);
            ref_sq += analytic * analytic;
        }
        let rel_rms = (err_sq / ref_sq).sqrt();
        assert!(rel_rms < 0.02, "relative RMS jerk error {rel_rms}");
    }

    #[test]
    fn semicircle_fixture() {
        // Radius 0.5 m arc traversed at constant speed over 4 s.
        let r = 0.5;
        let n = 401;
        let samples: Vec<(f64, Vector3<f64>)> = (0..n)
            .map(|i| {
                let t = 4.0 * i as f64 / (n - 1) as f64;
                let angle = std::f64::consts::PI * t / 4.0;
                (t, Vector3::new(r * angle.cos(), r * angle.sin(), 0.0))
            })
            .collect();
        let log = TrajectoryLog { label: "arc".into(), samples };
        let analysis = analyze_log(&log, &config()).unwrap();
        assert_relative_eq!(analysis.metrics.straight_distance, 1.0, epsilon = 1e-3);
        let arc = std::f64::consts::FRAC_PI_2;
        assert!((analysis.metrics.traj_length - arc).abs() / arc < 0.01);
    }

    #[test]
    fn length_dominates_straight_distance() {
        let points_log = quintic_log(100.0);
        let analysis = analyze_log(&points_log, &config()).unwrap();
        assert!(analysis.metrics.traj_length >= analysis.metrics.straight_distance - 1e-9);
    }

    #[test]
    fn jerk_invariant_to_offset_and_drift() {
        let rate = 100.0;
        let n = 201;
        let base: Vec<(f64, Vector3<f64>)> = (0..n)
            .map(|i| {
                let t = 2.0 * i as f64 / (n - 1) as f64;
                (t, Vector3::new((3.0 * t).sin() * 0.1, 0.0, 0.05 * t * t))
            })
            .collect();
        let shifted: Vec<(f64, Vector3<f64>)> = base
            .iter()
            .map(|(t, p)| (*t, p + Vector3::new(1.0, -2.0, 0.5) + Vector3::new(0.3, 0.1, -0.2) * *t))
            .collect();
        let mut cfg = config();
        cfg.resample_rate = rate;
        cfg.stillness_speed = 0.0;
        let a = analyze_log(&TrajectoryLog { label: "a".into(), samples: base }, &cfg).unwrap();
        let b = analyze_log(&TrajectoryLog { label: "b".into(), samples: shifted }, &cfg).unwrap();
        assert_relative_eq!(a.metrics.rms_jerk, b.metrics.rms_jerk, epsilon = 1e-6);
    }

    #[test]
    fn percentile_monotone_and_bounded() {
        let values: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let max = 99.0;
        let mut prev = f64::NEG_INFINITY;
        for q in [1.0, 10.0, 50.0, 90.0, 99.0, 99.9] {
            let p = percentile(&values, q);
            assert!(p >= prev);
            assert!(p <= max);
            prev = p;
        }
    }

    #[test]
    fn too_few_samples_is_a_data_error() {
        let series = UniformSeries { t0: 0.0, dt: 0.01, points: vec![Vector3::zeros(); 3] };
        assert!(matches!(
            segment_metrics(&series, &[], &config()),
            Err(MetricsError::TooFewSamples { have: 3, need: 4 })
        ));
    }

    fn reach_record(attempt: u64, d: f64, reached: bool) -> SuccessRecord {
        SuccessRecord {
            attempt,
            final_distance: d,
            reached_in_time: reached,
            grasped: false,
            detached: false,
            deposited: false,
        }
    }

    #[test]
    fn reach_rate_counting() {
        let mut records: Vec<SuccessRecord> =
            (0..29).map(|i| reach_record(i, 0.01, true)).collect();
        records.push(reach_record(29, 0.05, true));
        let rate = reach_success_rate(&records, 0.02).unwrap();
        assert_relative_eq!(rate, 100.0 * 29.0 / 30.0, epsilon = 1e-12);
        assert_eq!(format!("{rate:.2}"), "96.67");
    }

    #[test]
    fn reach_rate_all_failing_and_empty() {
        let records: Vec<SuccessRecord> = (0..5).map(|i| reach_record(i, 1.0, false)).collect();
        assert_eq!(reach_success_rate(&records, 0.02).unwrap(), 0.0);
        assert!(matches!(reach_success_rate(&[], 0.02), Err(MetricsError::EmptyRecords)));
    }

    #[test]
    fn paper_scale_reach_rate() {
        let records: Vec<SuccessRecord> = (0..281)
            .map(|i| reach_record(i, if i < 272 { 0.01 } else { 0.5 }, i < 272))
            .collect();
        let rate = reach_success_rate(&records, 0.02).unwrap();
        assert_eq!(format!("{rate:.1}"), "96.8");
    }

    fn harvest_record(attempt: u64, stages: (bool, bool, bool)) -> SuccessRecord {
        SuccessRecord {
            attempt,
            final_distance: 0.01,
            reached_in_time: true,
            grasped: stages.0,
            detached: stages.1,
            deposited: stages.2,
        }
    }

    #[test]
    fn harvest_rate_paper_scale() {
        let records: Vec<SuccessRecord> = (0..281)
            .map(|i| {
                harvest_record(i, if i < 237 { (true, true, true) } else { (true, true, false) })
            })
            .collect();
        let rate = harvest_success_rate(&records).unwrap();
        assert_eq!(format!("{rate:.1}"), "84.3");
    }

    #[test]
    fn harvest_rate_all_deposited() {
        let records: Vec<SuccessRecord> =
            (0..7).map(|i| harvest_record(i, (true, true, true))).collect();
        assert_eq!(harvest_success_rate(&records).unwrap(), 100.0);
    }

    #[test]
    fn stage_monotonicity_enforced_at_load() {
        let jsonl = concat!(
            r#"{"attempt":0,"final_distance":0.01,"reached_in_time":true,"grasped":true,"detached":true,"deposited":true}"#,
            "\n",
            r#"{"attempt":1,"final_distance":0.01,"reached_in_time":true,"grasped":false,"detached":true,"deposited":false}"#,
            "\n"
        );
        let err = read_success_records(jsonl.as_bytes()).unwrap_err();
        assert!(matches!(err, MetricsError::StageFlags { attempt: 1 }));
    }

    #[test]
    fn success_rates_permutation_invariant() {
        let mut records: Vec<SuccessRecord> = (0..50)
            .map(|i| harvest_record(i, (i % 2 == 0, i % 2 == 0, i % 4 == 0)))
            .collect();
        let r1 = harvest_success_rate(&records).unwrap();
        records.reverse();
        assert_eq!(harvest_success_rate(&records).unwrap(), r1);
    }

    #[test]
    fn trajectory_csv_roundtrip_and_errors() {
        let csv_text = "t,x,y,z,segment_label\n0.0,0,0,0,a\n0.1,0.1,0,0,a\n0.0,0,0,0,b\n0.1,0,0.1,0,b\n";
        let logs = read_trajectory_csv(csv_text.as_bytes()).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(logs[0].label, "a");
        assert_eq!(logs[1].samples.len(), 2);
        let mut out = Vec::new();
        write_trajectory_csv(&mut out, &logs).unwrap();
        let reparsed = read_trajectory_csv(out.as_slice()).unwrap();
        assert_eq!(reparsed, logs);

        let bad = "t,x,y,z,segment_label\n0.0,zzz,0,0,a\n";
        match read_trajectory_csv(bad.as_bytes()) {
            Err(MetricsError::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn summarize_groups_by_label() {
        let m = SegmentMetrics {
            duration: 2.0,
            straight_distance: 1.0,
            traj_length: 1.2,
            mean_speed: 0.6,
            rms_jerk: 10.0,
            peak_jerk_robust: 50.0,
        };
        let mut m2 = m;
        m2.duration = 4.0;
        let rows = summarize(&[
            ("pull".to_string(), m),
            ("reach".to_string(), m),
            ("pull".to_string(), m2),
        ]);
        assert_eq!(rows.len(), 2);
        let pull = rows.iter().find(|r| r.label == "pull").unwrap();
        assert_eq!(pull.count, 2);
        assert_relative_eq!(pull.duration_mean, 3.0, epsilon = 1e-12);
        assert_relative_eq!(pull.duration_std, 1.0, epsilon = 1e-12);
    }
}
