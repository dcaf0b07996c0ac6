//! Square fiducials: codec, image detector, planar pose and multi-marker
//! body fusion.

pub mod body;
pub mod codec;
pub mod detect;
pub mod pose;
pub mod render;

pub use body::{fuse_body_pose, quaternion_average, BodyModel, BodyPoseEstimate, MarkerMount};
pub use codec::{Decoded, Dictionary};
pub use detect::{detect_candidates, DetectorConfig, MarkerCandidate};
pub use pose::{marker_object_corners, pose_from_corners, reprojection_rms, Homography, Pose};
pub use render::{render_marker_image, render_marker_into};

use crate::rectifier::{PinholeIntrinsics, RectifiedView};

/// A marker found in one tile. `pose` maps marker coordinates into the tile
/// camera frame (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub id: u16,
    pub corners: [(f64, f64); 4],
    pub pose: Pose,
    pub partition_index: usize,
    pub reprojection_rms: f64,
    pub bit_errors: u32,
}

/// Printed marker description.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSpec {
    pub id: u16,
    pub side_length: f64,
    pub code_grid: [[bool; codec::GRID]; codec::GRID],
}

impl MarkerSpec {
    pub fn new(id: u16, side_length: f64) -> Option<Self> {
        let code_grid = Dictionary::standard().grid(id)?;
        (side_length > 0.0).then_some(MarkerSpec { id, side_length, code_grid })
    }
}

/// Finds markers in a tile and estimates each pose; `side_of` gives the
/// printed side for an id, or `None` to ignore that id.
pub fn detect_markers(
    view: &RectifiedView,
    side_of: impl Fn(u16) -> Option<f64>,
    cfg: &DetectorConfig,
) -> Vec<Detection> {
    let k = view.intrinsics();
    detect_candidates(view.image(), Dictionary::standard(), cfg)
        .into_iter()
        .filter_map(|c| {
            let side = side_of(c.id)?;
            detection_from_corners(c.id, c.corners, &k, side, view.partition_index(), c.bit_errors, cfg)
        })
        .collect()
}

/// Pose and reprojection check for one set of ordered corners. Poses above
/// `cfg.max_reprojection_px` are polished, and dropped if still above.
pub fn detection_from_corners(
    id: u16,
    corners: [(f64, f64); 4],
    k: &PinholeIntrinsics,
    side: f64,
    partition_index: usize,
    bit_errors: u32,
    cfg: &DetectorConfig,
) -> Option<Detection> {
    let obj = marker_object_corners(side);
    let mut pose = pose_from_corners(&corners, k, side, cfg.refine_pose).ok()?;
    let mut rms = reprojection_rms(&pose, &obj, &corners, k);
    if rms > cfg.max_reprojection_px && !cfg.refine_pose {
        pose = pose::refine_pose(pose, &obj, &corners, k);
        rms = reprojection_rms(&pose, &obj, &corners, k);
    }
    (rms <= cfg.max_reprojection_px).then_some(Detection {
        id,
        corners,
        pose,
        partition_index,
        reprojection_rms: rms,
        bit_errors,
    })
}
