use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::geometric::{geometric_detect, GeometricDetectorModel};
use super::render::render_frame;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::fiducial::{detect_markers, BodyModel, Detection, DetectorConfig, Dictionary, Pose};
use crate::partition::PartitionLayout;
use crate::rectifier::{layout_views, rectify_view, EquirectImage, Interpolation, ViewGeometry};
use crate::tracker::{Algo, FrameResult, TrackerConfig, TrackerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Image,
    #[default]
    Geometric,
}

impl std::str::FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "image" => Ok(DetectorKind::Image),
            "geometric" => Ok(DetectorKind::Geometric),
            _ => Err(format!("unknown detector '{s}' (image|geometric)")),
        }
    }
}

/// Machine-independent processing-time model. Every processed frame pays
/// for rectifying all tiles plus one detector pass per call; frames that
/// arrive while the previous one is still being processed are dropped
/// when `enabled`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealtimeModel {
    pub enabled: bool,
    /// Seconds per rectified tile pixel.
    pub rectify_s_per_px: f64,
    /// Seconds per tile pixel scanned by the detector.
    pub detect_s_per_px: f64,
}

impl Default for RealtimeModel {
    fn default() -> Self {
        RealtimeModel { enabled: false, rectify_s_per_px: 4e-8, detect_s_per_px: 1.5e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Source frame height; width is twice this.
    pub src_height: u32,
    pub tile_side: u32,
    pub algo: Algo,
    pub detector: DetectorKind,
    pub tracker: TrackerConfig,
    pub geometric: GeometricDetectorModel,
    pub detection: DetectorConfig,
    pub realtime: RealtimeModel,
    /// Anti-aliasing samples per axis when rendering.
    pub supersample: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            src_height: 480,
            tile_side: 512,
            algo: Algo::Optimized,
            detector: DetectorKind::Geometric,
            tracker: TrackerConfig::default(),
            geometric: GeometricDetectorModel::default(),
            detection: DetectorConfig::default(),
            realtime: RealtimeModel::default(),
            supersample: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.src_height < 4 {
            return Err(Error::Config(format!("source height {} too small", self.src_height)));
        }
        if self.supersample == 0 {
            return Err(Error::Config("supersample must be at least 1".into()));
        }
        let rt = &self.realtime;
        if !(rt.rectify_s_per_px >= 0.0 && rt.detect_s_per_px >= 0.0) {
            return Err(Error::Config("real-time costs must be non-negative".into()));
        }
        self.geometric.validate()
    }
}

/// One row of the per-frame table.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub t: f64,
    pub truth: Pose,
    /// False when the real-time model dropped the frame.
    pub processed: bool,
    pub found: bool,
    pub partition: Option<usize>,
    pub detector_calls: usize,
    pub markers: usize,
    pub estimate: Option<Pose>,
    /// Modeled processing time.
    pub elapsed_ms: f64,
    pub pixels: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary {
    pub frames: usize,
    pub processed: usize,
    pub detections: usize,
    /// Mean of `|‖estimate‖ − ‖truth‖|` over frames with an estimate.
    pub mean_abs_distance_error_m: f64,
    /// Mean Euclidean position error over frames with an estimate.
    pub mean_position_error_m: f64,
    /// Mean calls over processed frames.
    pub mean_detector_calls: f64,
    pub mean_markers: f64,
    pub pixels_processed: u64,
    pub modeled_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<FrameRecord>,
    pub summary: Summary,
}

pub fn summarize(rows: &[FrameRecord]) -> Summary {
    let mut s = Summary { frames: rows.len(), ..Default::default() };
    let (mut calls, mut markers, mut est) = (0usize, 0usize, 0usize);
    for r in rows {
        if r.processed {
            s.processed += 1;
            calls += r.detector_calls;
        }
        s.pixels_processed += r.pixels;
        s.modeled_seconds += r.elapsed_ms / 1000.0;
        if r.found {
            s.detections += 1;
        }
        if let Some(e) = &r.estimate {
            est += 1;
            markers += r.markers;
            s.mean_abs_distance_error_m += (e.translation.norm() - r.truth.translation.norm()).abs();
            s.mean_position_error_m += (e.translation - r.truth.translation).norm();
        }
    }
    if est > 0 {
        s.mean_abs_distance_error_m /= est as f64;
        s.mean_position_error_m /= est as f64;
        s.mean_markers = markers as f64 / est as f64;
    }
    if s.processed > 0 {
        s.mean_detector_calls = calls as f64 / s.processed as f64;
    }
    s
}

/// Renders (or reuses) frames along a trajectory and replays the tracker.
pub fn run_experiment(traj: &Trajectory, layout: &PartitionLayout, body: &BodyModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    traj.validate()?;
    let render = |k: usize| {
        render_frame(&traj.pose(traj.frame_time(k)), body, Dictionary::standard(), cfg.src_height, cfg.supersample)
    };
    replay(traj.frame_count(), |k| traj.frame_time(k), |k| traj.pose(traj.frame_time(k)), &render, layout, body, cfg)
}

/// Tracker replay over `count` frames. `image_of` is only called when the
/// image detector needs the frame.
pub fn replay(
    count: usize,
    time_of: impl Fn(usize) -> f64,
    truth_of: impl Fn(usize) -> Pose,
    image_of: &dyn Fn(usize) -> Result<EquirectImage>,
    layout: &PartitionLayout,
    body: &BodyModel,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let views = layout_views(layout, cfg.tile_side)?;
    let mut state = TrackerState::new(layout, views.clone(), cfg.tracker)?;
    let tile_px = cfg.tile_side as u64 * cfg.tile_side as u64;
    let rt = cfg.realtime;
    let mut busy_until = f64::NEG_INFINITY;
    let mut rows = Vec::with_capacity(count);
    for k in 0..count {
        let t = time_of(k);
        let truth = truth_of(k);
        if rt.enabled && t < busy_until - 1e-12 {
            rows.push(FrameRecord {
                frame: k,
                t,
                truth,
                processed: false,
                found: false,
                partition: None,
                detector_calls: 0,
                markers: 0,
                estimate: None,
                elapsed_ms: 0.0,
                pixels: 0,
            });
            continue;
        }
        let result = match cfg.detector {
            DetectorKind::Geometric => {
                let probe = |p: usize| -> std::result::Result<Vec<Detection>, String> {
                    Ok(geometric_detect(&truth, &views[p], &cfg.geometric, body, cfg.src_height, k as u64, &cfg.detection))
                };
                state.step(cfg.algo, probe, body)
            }
            DetectorKind::Image => {
                let frame: OnceLock<std::result::Result<EquirectImage, String>> = OnceLock::new();
                let probe = |p: usize| -> std::result::Result<Vec<Detection>, String> {
                    let img = frame.get_or_init(|| image_of(k).map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)?;
                    image_probe(img, &views[p], body, &cfg.detection)
                };
                state.step(cfg.algo, probe, body)
            }
        };
        if let Some((p, e)) = result.failures.first() {
            log::warn!("frame {k}: partition {p} failed: {e}");
        }
        let pixels = layout.n() as u64 * tile_px + result.detector_calls as u64 * tile_px;
        let seconds = (layout.n() as u64 * tile_px) as f64 * rt.rectify_s_per_px
            + (result.detector_calls as u64 * tile_px) as f64 * rt.detect_s_per_px;
        busy_until = t + seconds;
        rows.push(record(k, t, truth, &result, seconds * 1000.0, pixels));
    }
    let summary = summarize(&rows);
    Ok(ExperimentReport { rows, summary })
}

fn image_probe(img: &EquirectImage, view: &ViewGeometry, body: &BodyModel, cfg: &DetectorConfig) -> std::result::Result<Vec<Detection>, String> {
    let tile = rectify_view(img, *view, Interpolation::Bilinear).map_err(|e| e.to_string())?;
    Ok(detect_markers(&tile, |id| body.mount(id).map(|_| body.marker_side), cfg))
}

fn record(frame: usize, t: f64, truth: Pose, r: &FrameResult, elapsed_ms: f64, pixels: u64) -> FrameRecord {
    FrameRecord {
        frame,
        t,
        truth,
        processed: true,
        found: r.found,
        partition: r.partition,
        detector_calls: r.detector_calls,
        markers: r.estimate.as_ref().map_or(0, |e| e.marker_count),
        estimate: r.estimate.as_ref().map(|e| e.pose),
        elapsed_ms,
        pixels,
    }
}

/// Results table: frame, found, partition, detector_calls, est_x, est_y,
/// est_z, est_qw, est_qx, est_qy, est_qz, elapsed_ms.
pub fn results_csv(rows: &[FrameRecord]) -> String {
    let mut out = String::from("frame,found,partition,detector_calls,est_x,est_y,est_z,est_qw,est_qx,est_qy,est_qz,elapsed_ms\n");
    for r in rows {
        let part = r.partition.map(|p| p.to_string()).unwrap_or_default();
        let est = match &r.estimate {
            Some(p) => {
                let q = p.rotation.to_quaternion();
                let t = p.translation;
                format!("{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", t.x, t.y, t.z, q.w, q.i, q.j, q.k)
            }
            None => ",,,,,,".to_string(),
        };
        let _ = writeln!(out, "{},{},{},{},{},{:.3}", r.frame, r.found as u8, part, r.detector_calls, est, r.elapsed_ms);
    }
    out
}

/// Ground-truth table: frame, t, x, y, z, qw, qx, qy, qz.
pub fn truth_csv(rows: &[(usize, f64, Pose)]) -> String {
    let mut out = String::from("frame,t,x,y,z,qw,qx,qy,qz\n");
    for (k, t, p) in rows {
        let q = p.rotation.to_quaternion();
        let v = p.translation;
        let _ = writeln!(out, "{k},{t:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}", v.x, v.y, v.z, q.w, q.i, q.j, q.k);
    }
    out
}
