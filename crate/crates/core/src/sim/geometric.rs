use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducial::pose::marker_object_corners;
use crate::fiducial::{detection_from_corners, BodyModel, Detection, DetectorConfig, Pose};
use crate::rectifier::ViewGeometry;

/// Image-free stand-in for the marker detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricDetectorModel {
    /// Smallest mean marker side, in source-resolution pixels.
    pub min_side_px: f64,
    /// Largest angle between the face normal and the line of sight.
    pub max_incidence_deg: f64,
    /// Chance that a visible face is reported.
    pub probability: f64,
    /// Corner noise, source-resolution pixels.
    pub sigma_px: f64,
    /// Corners must lie this far inside the tile, tile pixels.
    pub margin_px: f64,
    pub seed: u64,
}

impl Default for GeometricDetectorModel {
    fn default() -> Self {
        GeometricDetectorModel {
            min_side_px: 12.0,
            max_incidence_deg: 70.0,
            probability: 1.0,
            sigma_px: 0.5,
            margin_px: 2.0,
            seed: 0,
        }
    }
}

impl GeometricDetectorModel {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.probability)
            && self.sigma_px >= 0.0
            && self.min_side_px >= 0.0
            && self.margin_px >= 0.0
            && self.max_incidence_deg > 0.0
            && self.max_incidence_deg <= 90.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("geometric detector out of range: {self:?}")))
        }
    }
}

/// Pixels per radian a tile can actually resolve: its own focal length,
/// capped by the source frame's `height / π`.
pub fn effective_focal(view: &ViewGeometry, src_height: u32) -> f64 {
    view.intrinsics().focal.min(src_height as f64 / std::f64::consts::PI)
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream per (seed, frame, partition).
pub fn probe_rng(seed: u64, frame: u64, partition: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(frame.wrapping_add(0x9E37_79B9))) ^ partition as u64))
}

/// Faces of the body the model reports in one tile.
pub fn geometric_detect(
    pose: &Pose,
    view: &ViewGeometry,
    model: &GeometricDetectorModel,
    body: &BodyModel,
    src_height: u32,
    frame: u64,
    det_cfg: &DetectorConfig,
) -> Vec<Detection> {
    let k = view.intrinsics();
    let f_eff = effective_focal(view, src_height);
    let to_eff = f_eff / k.focal;
    let mut rng = probe_rng(model.seed, frame, view.partition_index);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let cam_from_rig = Pose::new(view.camera_to_world().transpose(), Vector3::zeros());
    let obj = marker_object_corners(body.marker_side);
    let cos_max = model.max_incidence_deg.to_radians().cos();
    let mut out = Vec::new();
    for m in &body.markers {
        let rig_marker = pose.compose(&m.pose);
        let normal = -rig_marker.rotation.apply(&Vector3::z());
        let to_cam = -rig_marker.translation;
        let cos_inc = normal.dot(&to_cam) / to_cam.norm();
        if cos_inc <= cos_max {
            continue;
        }
        let cam_marker = cam_from_rig.compose(&rig_marker);
        let mut corners = [(0.0, 0.0); 4];
        let mut inside = true;
        for (c, o) in corners.iter_mut().zip(&obj) {
            match k.project(&cam_marker.transform_point(o)) {
                Some((u, v)) if view.contains_pixel(u, v, model.margin_px) => *c = (u, v),
                _ => inside = false,
            }
        }
        if !inside {
            continue;
        }
        let side_px = (0..4)
            .map(|i| {
                let (a, b) = (corners[i], corners[(i + 1) % 4]);
                (a.0 - b.0).hypot(a.1 - b.1)
            })
            .sum::<f64>()
            / 4.0;
        if side_px * to_eff < model.min_side_px {
            continue;
        }
        // Draw in a fixed order so outcomes do not depend on earlier faces.
        let u: f64 = rng.gen();
        let jitter: [f64; 8] = std::array::from_fn(|_| noise.sample(&mut rng));
        if u >= model.probability {
            continue;
        }
        let sigma_tile = model.sigma_px / to_eff;
        for (i, c) in corners.iter_mut().enumerate() {
            c.0 += sigma_tile * jitter[2 * i];
            c.1 += sigma_tile * jitter[2 * i + 1];
        }
        if let Some(d) = detection_from_corners(m.id, corners, &k, body.marker_side, view.partition_index, 0, det_cfg) {
            out.push(d);
        }
    }
    out.sort_by_key(|d| d.id);
    out
}
