use std::f64::consts::{FRAC_PI_2, PI};

use image::RgbImage;
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::Result;
use crate::fiducial::codec::{Dictionary, GRID};
use crate::fiducial::render::{INK, PAPER};
use crate::fiducial::{BodyModel, Pose};
use crate::rectifier::EquirectImage;

/// A face in the rig frame, ready for ray casting.
#[derive(Debug, Clone)]
pub(crate) struct PlacedFace {
    /// Marker-to-rig pose.
    pub pose: Pose,
    pub normal: Vector3<f64>,
    pub grid: [[bool; GRID]; GRID],
}

impl PlacedFace {
    /// Outward normal points back at the camera.
    pub fn front_facing(&self) -> bool {
        self.normal.dot(&self.pose.translation) < 0.0
    }
}

pub(crate) fn place_faces(pose: &Pose, body: &BodyModel, dict: &Dictionary) -> Vec<PlacedFace> {
    body.markers
        .iter()
        .filter_map(|m| {
            let p = pose.compose(&m.pose);
            Some(PlacedFace { normal: -p.rotation.apply(&Vector3::z()), pose: p, grid: dict.grid(m.id)? })
        })
        .collect()
}

/// Which faces of the body point at the camera.
pub fn visible_faces(pose: &Pose, body: &BodyModel) -> Vec<bool> {
    place_faces(pose, body, Dictionary::standard()).iter().map(|f| f.front_facing()).collect()
}

/// Background gray level for a direction; smooth and marker-free.
/// Sky gradient by height `z` and longitude.
fn background_at(z: f64, sin_2lon: f64) -> [u8; 3] {
    let v = (105.0 + 55.0 * z + 18.0 * sin_2lon).clamp(0.0, 255.0);
    [v as u8, (v * 0.96) as u8, (v * 0.9) as u8]
}

/// Gray level where the ray `d` from the origin first hits a face, if any.
fn cast(d: &Vector3<f64>, faces: &[PlacedFace], marker_side: f64, face_side: f64) -> Option<u8> {
    let mut best: Option<(f64, u8)> = None;
    for f in faces.iter().filter(|f| f.front_facing()) {
        let denom = d.dot(&f.normal);
        if denom >= 0.0 {
            continue;
        }
        let s = f.pose.translation.dot(&f.normal) / denom;
        if !(s > 0.0) || best.is_some_and(|b| b.0 <= s) {
            continue;
        }
        let local = f.pose.rotation.transpose().apply(&(d * s - f.pose.translation));
        let half_face = face_side / 2.0;
        if local.x.abs() > half_face || local.y.abs() > half_face {
            continue;
        }
        let half = marker_side / 2.0;
        let level = if local.x.abs() < half && local.y.abs() < half {
            let cell = marker_side / GRID as f64;
            let c = (((local.x + half) / cell) as usize).min(GRID - 1);
            let r = (((local.y + half) / cell) as usize).min(GRID - 1);
            if f.grid[r][c] {
                PAPER
            } else {
                INK
            }
        } else {
            PAPER
        };
        best = Some((s, level));
    }
    best.map(|b| b.1)
}

/// Equirectangular frame `2h × h` of the body at `pose`, supersampled
/// `supersample²` times per pixel near the body.
pub fn render_frame(pose: &Pose, body: &BodyModel, dict: &Dictionary, height: u32, supersample: u32) -> Result<EquirectImage> {
    let width = 2 * height;
    let faces = place_faces(pose, body, dict);
    let dist = pose.translation.norm();
    let center = pose.translation / dist.max(1e-12);
    let px_angle = PI / height as f64;
    // Angular radius of the body plus two pixels of slack.
    let reach = (body.bounding_radius() / dist).min(1.0).asin() + 2.0 * px_angle;
    let cos_reach = if reach >= PI { -1.0 } else { reach.cos() };
    let ss = supersample.max(1);
    let (w, h) = (width as usize, height as usize);
    let lon_of = |fc: f64| -PI + fc * 2.0 * PI / w as f64;
    let lat_of = |fr: f64| FRAC_PI_2 - fr * PI / h as f64;
    let cols: Vec<(f64, f64)> = (0..w).map(|c| lon_of(c as f64 + 0.5).sin_cos()).collect();
    let mut buf = vec![0u8; w * h * 3];
    buf.par_chunks_mut(w * 3).enumerate().for_each(|(row, line)| {
        let (sin_lat, cos_lat) = lat_of(row as f64 + 0.5).sin_cos();
        for (col, &(sin_lon, cos_lon)) in cols.iter().enumerate() {
            let d = Vector3::new(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat);
            let bg = background_at(sin_lat, 2.0 * sin_lon * cos_lon);
            let px = if d.dot(&center) < cos_reach {
                bg
            } else {
                let mut acc = [0u32; 3];
                for sy in 0..ss {
                    let (sl, cl) = lat_of(row as f64 + (sy as f64 + 0.5) / ss as f64).sin_cos();
                    for sx in 0..ss {
                        let (so, co) = lon_of(col as f64 + (sx as f64 + 0.5) / ss as f64).sin_cos();
                        let ds = Vector3::new(cl * co, cl * so, sl);
                        let c = match cast(&ds, &faces, body.marker_side, body.face_side) {
                            Some(v) => [v; 3],
                            None => bg,
                        };
                        for k in 0..3 {
                            acc[k] += c[k] as u32;
                        }
                    }
                }
                let n = ss * ss;
                acc.map(|a| ((a + n / 2) / n) as u8)
            };
            line[col * 3..col * 3 + 3].copy_from_slice(&px);
        }
    });
    EquirectImage::new(RgbImage::from_raw(width, height, buf).expect("sized buffer"))
}
