use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::pose::Pose;
use super::Detection;
use crate::error::{Error, Result};
use crate::rectifier::ViewGeometry;
use crate::sphere_geometry::Rotation;

/// Where a marker sits on the body: `pose` maps marker coordinates into the
/// body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerMount {
    pub id: u16,
    pub pose: Pose,
}

/// Rigid set of markers sharing one printed side length.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub name: String,
    pub marker_side: f64,
    /// Side of the white square face each marker is printed on.
    pub face_side: f64,
    pub markers: Vec<MarkerMount>,
}

#[derive(Serialize, Deserialize)]
struct BodyFile {
    name: String,
    marker_side: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face_side: Option<f64>,
    markers: Vec<MountFile>,
}

#[derive(Serialize, Deserialize)]
struct MountFile {
    id: u16,
    t: [f64; 3],
    /// w, x, y, z
    q: [f64; 4],
}

impl BodyModel {
    pub fn new(name: impl Into<String>, marker_side: f64, markers: Vec<MarkerMount>) -> Result<Self> {
        if !(marker_side > 0.0 && marker_side.is_finite()) {
            return Err(Error::InvalidArgument(format!("marker side {marker_side} must be positive")));
        }
        if markers.is_empty() {
            return Err(Error::InvalidArgument("a body needs at least one marker".into()));
        }
        let mut ids: Vec<u16> = markers.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate marker id on body".into()));
        }
        Ok(BodyModel { name: name.into(), marker_side, face_side: marker_side * 1.4, markers })
    }

    /// Sets the printed face size; it must hold the marker.
    pub fn with_face_side(mut self, face_side: f64) -> Result<Self> {
        if !(face_side >= self.marker_side && face_side.is_finite()) {
            return Err(Error::InvalidArgument(format!("face side {face_side} smaller than marker")));
        }
        self.face_side = face_side;
        Ok(self)
    }

    /// Nine markers on the upper faces of a rhombicuboctahedron with edge
    /// `face_edge`: the top face, the four upper diagonal faces and the four
    /// equatorial axis faces. Marker `y` points as far down the body as the
    /// face allows.
    pub fn rhombicuboctahedron(face_edge: f64, marker_side: f64) -> Result<Self> {
        if !(marker_side < face_edge) {
            return Err(Error::InvalidArgument("markers must fit inside the faces".into()));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let normals = [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(s, 0.0, s),
            Vector3::new(0.0, s, s),
            Vector3::new(-s, 0.0, s),
            Vector3::new(0.0, -s, s),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
        ];
        let inradius = face_edge * (1.0 + std::f64::consts::SQRT_2) / 2.0;
        let markers = normals
            .iter()
            .enumerate()
            .map(|(i, n)| MarkerMount { id: i as u16, pose: Pose::new(face_frame(n), n * inradius) })
            .collect();
        BodyModel::new("rhombicuboctahedron", marker_side, markers)?.with_face_side(face_edge)
    }

    pub fn mount(&self, id: u16) -> Option<&MarkerMount> {
        self.markers.iter().find(|m| m.id == id)
    }

    /// Outward face normal of a mounted marker, body frame.
    pub fn outward_normal(&self, id: u16) -> Option<Vector3<f64>> {
        self.mount(id).map(|m| -m.pose.rotation.apply(&Vector3::z()))
    }

    /// Radius of the smallest body-centered sphere holding every face.
    pub fn bounding_radius(&self) -> f64 {
        self.markers
            .iter()
            .flat_map(|m| super::pose::marker_object_corners(self.face_side).map(|c| m.pose.transform_point(&c).norm()))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let file = BodyFile {
            name: self.name.clone(),
            marker_side: self.marker_side,
            face_side: Some(self.face_side),
            markers: self
                .markers
                .iter()
                .map(|m| {
                    let q = m.pose.rotation.to_quaternion();
                    let t = m.pose.translation;
                    MountFile { id: m.id, t: [t.x, t.y, t.z], q: [q.w, q.i, q.j, q.k] }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("body serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: BodyFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let markers = file
            .markers
            .iter()
            .map(|m| {
                let q = Quaternion::new(m.q[0], m.q[1], m.q[2], m.q[3]);
                if !(q.norm() > 1e-9) {
                    return Err(format!("marker {}: zero quaternion", m.id));
                }
                let rotation = Rotation::from_quaternion(&UnitQuaternion::from_quaternion(q));
                Ok(MarkerMount { id: m.id, pose: Pose::new(rotation, Vector3::from(m.t)) })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let body = BodyModel::new(file.name, file.marker_side, markers).map_err(|e| e.to_string())?;
        match file.face_side {
            Some(f) => body.with_face_side(f).map_err(|e| e.to_string()),
            None => Ok(body),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BodyModel::from_json(&text).map_err(|m| Error::format(path, m))
    }
}

impl Default for BodyModel {
    fn default() -> Self {
        BodyModel::rhombicuboctahedron(0.07, 0.05).expect("default body is valid")
    }
}

/// Marker axes for a face with outward normal `n`: z into the face, y the
/// in-plane direction closest to body down.
fn face_frame(n: &Vector3<f64>) -> Rotation {
    let z = -n.normalize();
    let down = Vector3::new(0.0, 0.0, -1.0);
    let mut y = down - z * down.dot(&z);
    if y.norm() < 1e-9 {
        y = Vector3::new(0.0, -1.0, 0.0);
    }
    let y = y.normalize();
    let x = y.cross(&z);
    Rotation::from_matrix(Matrix3::from_columns(&[x, y, z])).expect("orthonormal frame")
}

/// Fused body pose in the rig frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPoseEstimate {
    pub pose: Pose,
    pub marker_count: usize,
    pub partitions: Vec<usize>,
}

/// Combines per-marker detections into one body pose. `views` is indexed by
/// partition. Detections of ids the body does not carry are ignored.
pub fn fuse_body_pose(detections: &[Detection], views: &[ViewGeometry], body: &BodyModel) -> Option<BodyPoseEstimate> {
    let mut translations = Vec::new();
    let mut rotations = Vec::new();
    let mut partitions = Vec::new();
    for d in detections {
        let (Some(mount), Some(view)) = (body.mount(d.id), views.get(d.partition_index)) else { continue };
        let rig_cam = Pose::new(view.camera_to_world(), Vector3::zeros());
        let rig_body = rig_cam.compose(&d.pose).compose(&mount.pose.inverse());
        translations.push(rig_body.translation);
        rotations.push(rig_body.rotation.to_quaternion());
        partitions.push(d.partition_index);
    }
    if translations.is_empty() {
        return None;
    }
    let mean = translations.iter().sum::<Vector3<f64>>() / translations.len() as f64;
    let q = quaternion_average(&rotations)?;
    partitions.sort_unstable();
    partitions.dedup();
    Some(BodyPoseEstimate {
        pose: Pose::new(Rotation::from_quaternion(&q), mean),
        marker_count: translations.len(),
        partitions,
    })
}

/// Dominant eigenvector of `Σ q qᵀ`, sign-normalized to `w ≥ 0`. Insensitive
/// to the sign of each input.
pub fn quaternion_average(qs: &[UnitQuaternion<f64>]) -> Option<UnitQuaternion<f64>> {
    if qs.is_empty() {
        return None;
    }
    let mut m = Matrix4::<f64>::zeros();
    for q in qs {
        let v = Vector4::new(q.w, q.i, q.j, q.k);
        m += v * v.transpose();
    }
    let eig = m.symmetric_eigen();
    let (k, _) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let v = eig.eigenvectors.column(k);
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    Some(UnitQuaternion::from_quaternion(Quaternion::new(v[0] * sign, v[1] * sign, v[2] * sign, v[3] * sign)))
}
