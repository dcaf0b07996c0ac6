//! Synthetic scenes: trajectories, an equirectangular renderer, an
//! image-free detector model and the experiment runner.

pub mod experiment;
pub mod geometric;
pub mod render;
pub mod trajectory;

pub use experiment::{
    replay, results_csv, run_experiment, summarize, truth_csv, DetectorKind, ExperimentConfig, ExperimentReport,
    FrameRecord, RealtimeModel, Summary,
};
pub use geometric::{effective_focal, geometric_detect, GeometricDetectorModel};
pub use render::{render_frame, visible_faces};
pub use trajectory::{Path, Trajectory};

use crate::fiducial::Pose;

/// Ground truth for one instant, optionally with its rendered frame.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub t: f64,
    pub pose: Pose,
    pub image: Option<crate::rectifier::EquirectImage>,
    /// Front-facing flag per body marker, in body order.
    pub visible: Vec<bool>,
}
