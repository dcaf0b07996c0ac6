use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::rectifier::PinholeIntrinsics;
use crate::sphere_geometry::Rotation;

/// Rigid motion `x ↦ R·x + t`, translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -rt.apply(&self.translation) }
    }
}

/// Planar projective map, `dst ~ H·src`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    /// Normalized DLT over ≥ 4 correspondences.
    pub fn from_correspondences(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Self> {
        if src.len() != dst.len() || src.len() < 4 {
            return Err(Error::DegenerateHomography("need at least 4 point pairs"));
        }
        let (ts, ns) = normalizer(src);
        let (td, nd) = normalizer(dst);
        if polygon_area(&ns).abs() < 1e-9 || polygon_area(&nd).abs() < 1e-9 {
            return Err(Error::DegenerateHomography("points are collinear"));
        }
        let rows = (2 * src.len()).max(9);
        let mut a = DMatrix::<f64>::zeros(rows, 9);
        for (k, (&(x, y), &(u, v))) in ns.iter().zip(&nd).enumerate() {
            let r = 2 * k;
            a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.ok_or(Error::DegenerateHomography("SVD failed"))?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nine singular values");
        let h = v_t.row(imin);
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
        let td_inv = td.try_inverse().ok_or(Error::DegenerateHomography("singular normalizer"))?;
        let m = td_inv * hn * ts;
        let scale = m[(2, 2)];
        let m = if scale.abs() > 1e-12 { m / scale } else { m / m.norm() };
        let svals = m.singular_values();
        if svals.min() < 1e-10 * svals.max() {
            return Err(Error::DegenerateHomography("rank deficient"));
        }
        Ok(Homography(m))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }
}

fn normalizer(pts: &[(f64, f64)]) -> (Matrix3<f64>, Vec<(f64, f64)>) {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let mean_dist = pts.iter().map(|p| (p.0 - mx).hypot(p.1 - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0);
    let out = pts.iter().map(|p| (s * (p.0 - mx), s * (p.1 - my))).collect();
    (t, out)
}

/// Signed shoelace area; positive for clockwise order in y-down image coordinates.
pub fn polygon_area(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Marker-frame corners (x right, y down, z into the marker) in detection
/// order: top-left, bottom-left, bottom-right, top-right.
pub fn marker_object_corners(side: f64) -> [Vector3<f64>; 4] {
    let h = side / 2.0;
    [
        Vector3::new(-h, -h, 0.0),
        Vector3::new(-h, h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(h, -h, 0.0),
    ]
}

/// Pose of a square marker of side `side` in the tile camera frame (OpenCV
/// convention), from its four image corners in detection order.
pub fn pose_from_corners(corners: &[(f64, f64); 4], k: &PinholeIntrinsics, side: f64, refine: bool) -> Result<Pose> {
    if !(side > 0.0) {
        return Err(Error::InvalidArgument(format!("marker side {side} must be positive")));
    }
    let obj = marker_object_corners(side);
    let src: Vec<(f64, f64)> = obj.iter().map(|p| (p.x, p.y)).collect();
    let dst: Vec<(f64, f64)> = corners.iter().map(|&(u, v)| ((u - k.cx) / k.focal, (v - k.cy) / k.focal)).collect();
    let h = Homography::from_correspondences(&src, &dst)?.0;

    let (h1, h2, h3) = (h.column(0).into_owned(), h.column(1).into_owned(), h.column(2).into_owned());
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let rotation = Rotation::from_matrix(Matrix3::from_columns(&[r1, r2, r3]))
        .ok_or(Error::DegenerateHomography("rotation columns are degenerate"))?;
    let pose = Pose::new(rotation, h3 * lambda);
    if refine {
        Ok(refine_pose(pose, &obj, corners, k))
    } else {
        Ok(pose)
    }
}

pub fn project_points(pose: &Pose, pts: &[Vector3<f64>], k: &PinholeIntrinsics) -> Vec<Option<(f64, f64)>> {
    pts.iter().map(|p| k.project(&pose.transform_point(p))).collect()
}

/// RMS pixel distance between projected object points and observations;
/// infinite if any point falls behind the camera.
pub fn reprojection_rms(pose: &Pose, obj: &[Vector3<f64>], observed: &[(f64, f64)], k: &PinholeIntrinsics) -> f64 {
    let mut sum = 0.0;
    for (p, o) in project_points(pose, obj, k).into_iter().zip(observed) {
        match p {
            Some((u, v)) => sum += (u - o.0).powi(2) + (v - o.1).powi(2),
            None => return f64::INFINITY,
        }
    }
    (sum / obj.len() as f64).sqrt()
}

/// Levenberg-damped Gauss-Newton on the corner reprojection error.
pub fn refine_pose(mut pose: Pose, obj: &[Vector3<f64>; 4], observed: &[(f64, f64); 4], k: &PinholeIntrinsics) -> Pose {
    let residual = |p: &Pose| -> Option<SVector<f64, 8>> {
        let mut r = SVector::<f64, 8>::zeros();
        for (i, q) in obj.iter().enumerate() {
            let (u, v) = k.project(&p.transform_point(q))?;
            r[2 * i] = u - observed[i].0;
            r[2 * i + 1] = v - observed[i].1;
        }
        Some(r)
    };
    let perturb = |p: &Pose, d: &SVector<f64, 6>| -> Pose {
        let dr = Rotation::from_axis_angle(&Vector3::new(d[0], d[1], d[2]), Vector3::new(d[0], d[1], d[2]).norm());
        Pose::new(dr.compose(&p.rotation), p.translation + Vector3::new(d[3], d[4], d[5]))
    };
    let Some(mut r) = residual(&pose) else { return pose };
    let mut damping = 1e-3;
    for _ in 0..20 {
        let mut jac = SMatrix::<f64, 8, 6>::zeros();
        for c in 0..6 {
            let mut d = SVector::<f64, 6>::zeros();
            let eps = if c < 3 { 1e-7 } else { 1e-7 * pose.translation.norm().max(1e-3) };
            d[c] = eps;
            match residual(&perturb(&pose, &d)) {
                Some(rp) => jac.set_column(c, &((rp - r) / eps)),
                None => return pose,
            }
        }
        let jtj = jac.transpose() * jac;
        let jtr = jac.transpose() * r;
        let mut improved = false;
        for _ in 0..8 {
            let a = jtj + SMatrix::<f64, 6, 6>::identity() * damping * jtj.diagonal().max().max(1e-12);
            let Some(delta) = a.lu().solve(&(-jtr)) else { break };
            let cand = perturb(&pose, &delta);
            if let Some(rc) = residual(&cand) {
                if rc.norm_squared() < r.norm_squared() {
                    pose = cand;
                    r = rc;
                    damping = (damping * 0.3).max(1e-9);
                    improved = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved || r.norm() < 1e-10 {
            break;
        }
    }
    pose
}
