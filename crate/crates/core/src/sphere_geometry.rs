//! Spherical primitives shared by every other module.
//!
//! Axis convention: the canonical optical axis is `+x`, global north is `+z`,
//! latitude is measured from the equator and longitude counter-clockwise from
//! `+x` towards `+y`. A rectified tile looks along its center direction with
//! "up" being the projection of global north onto the tile plane.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Latitude (degrees) beyond which a tile's up vector falls back to the
/// prime-meridian tangent.
pub const POLE_FALLBACK_LAT_DEG: f64 = 89.9;

/// Unit vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction(Vector3<f64>);

impl Direction {
    /// The canonical optical axis, `+x`.
    pub const AXIS: Direction = Direction(Vector3::new(1.0, 0.0, 0.0));
    pub const NORTH: Direction = Direction(Vector3::new(0.0, 0.0, 1.0));

    /// Normalizes `(x, y, z)`. Returns `None` for a zero or non-finite vector.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if !n.is_finite() || n <= f64::MIN_POSITIVE {
            return None;
        }
        let mut u = v / n;
        // A second pass pulls the norm to within a couple of ulps of one.
        u /= u.norm();
        Some(Direction(u))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn neg(&self) -> Direction {
        Direction(-self.0)
    }
}

impl From<Unit<Vector3<f64>>> for Direction {
    fn from(u: Unit<Vector3<f64>>) -> Self {
        Direction(u.into_inner())
    }
}

/// Geographic coordinates in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

impl GeoCoord {
    /// Builds a coordinate, wrapping `lon` into `(-π, π]`, clamping `lat`
    /// and canonicalizing pole longitudes to zero.
    pub fn new(lat: f64, lon: f64) -> Self {
        let lat = lat.clamp(-FRAC_PI_2, FRAC_PI_2);
        let lon = if lat.abs() == FRAC_PI_2 { 0.0 } else { wrap_lon(lon) };
        GeoCoord { lat, lon }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians())
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat.to_degrees()
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon.to_degrees()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_lon(lon: f64) -> f64 {
    let mut l = lon.rem_euclid(2.0 * PI);
    if l > PI {
        l -= 2.0 * PI;
    }
    l
}

/// Orthonormal rotation with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Projects an arbitrary matrix onto SO(3) through its SVD.
    /// Returns `None` when the matrix is rank deficient.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u?, svd.v_t?);
        if svd.singular_values.min() < 1e-12 * svd.singular_values.max().max(1e-300) {
            return None;
        }
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Some(Rotation(u * d * v_t))
    }

    /// Wraps a matrix that is already orthonormal up to rounding.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(q.to_rotation_matrix().into_inner())
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        match Unit::try_new(*axis, 1e-15) {
            Some(a) => Self::from_quaternion(&UnitQuaternion::from_axis_angle(&a, angle)),
            None => Self::identity(),
        }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.0)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn apply_dir(&self, d: &Direction) -> Direction {
        Direction::from_vector(self.0 * d.0).expect("rotation preserves norm")
    }

    /// Largest entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Angle of the relative rotation `selfᵀ·other`, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let r = self.0.transpose() * other.0;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Point on a stereographic projection plane of a sphere of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoPoint {
    pub x: f64,
    pub y: f64,
    r: f64,
}

impl StereoPoint {
    /// Returns `None` unless `r` is finite and positive.
    pub fn new(x: f64, y: f64, r: f64) -> Option<Self> {
        (r.is_finite() && r > 0.0).then_some(StereoPoint { x, y, r })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }
}

/// Great-circle distance in `[0, π]`.
pub fn angular_distance(a: &Direction, b: &Direction) -> f64 {
    // atan2 of cross and dot keeps precision near 0 and π where acos does not.
    let c = a.0.cross(&b.0).norm();
    let d = a.0.dot(&b.0);
    c.atan2(d).clamp(0.0, PI)
}

pub fn dir_to_geo(d: &Direction) -> GeoCoord {
    let v = d.0;
    let horiz = v.x.hypot(v.y);
    let lat = v.z.atan2(horiz);
    if horiz == 0.0 {
        return GeoCoord { lat: lat.signum() * FRAC_PI_2, lon: 0.0 };
    }
    GeoCoord::new(lat, v.y.atan2(v.x))
}

pub fn geo_to_dir(g: &GeoCoord) -> Direction {
    let (sl, cl) = g.lat.sin_cos();
    let (so, co) = g.lon.sin_cos();
    Direction::new(cl * co, cl * so, sl).expect("unit by construction")
}

/// Inverse stereographic projection about the tangent point `(lat, lon) = (0, 0)`.
pub fn inverse_stereographic(p: &StereoPoint) -> GeoCoord {
    let rho = p.x.hypot(p.y);
    if rho == 0.0 {
        return GeoCoord { lat: 0.0, lon: 0.0 };
    }
    let c = 2.0 * (rho / (2.0 * p.r)).atan();
    let (sc, cc) = c.sin_cos();
    let lon = (p.x * sc).atan2(rho * cc);
    let lat = (p.y * sc / rho).clamp(-1.0, 1.0).asin();
    GeoCoord::new(lat, lon)
}

/// "Up" for a tile looking along `center`: global north projected onto the
/// tile plane, or the prime-meridian tangent near the poles.
pub fn north_up(center: &Direction) -> Direction {
    let c = center.0;
    let lat = c.z.clamp(-1.0, 1.0).asin();
    let reference = if lat.abs().to_degrees() > POLE_FALLBACK_LAT_DEG {
        Vector3::new(-lat.sin(), 0.0, lat.cos())
    } else {
        Vector3::z()
    };
    let up = reference - c * reference.dot(&c);
    Direction::from_vector(up).expect("reference is never parallel to center")
}

/// Rotation taking the canonical frame (forward `+x`, left `+y`, up `+z`)
/// to a frame whose forward axis is `center` and whose up axis is
/// [`north_up`]`(center)`.
pub fn rotation_aligning(center: &Direction) -> Rotation {
    let f = center.0;
    let up = north_up(center).0;
    let left = up.cross(&f).normalize();
    // Re-derive up so the columns are orthonormal to rounding.
    let up = f.cross(&left);
    Rotation(Matrix3::from_columns(&[f, left, up]))
}

/// Deterministic spherical Fibonacci lattice; `count = 1` yields the north pole.
pub fn fibonacci_sphere(count: usize) -> Vec<Direction> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![Direction::NORTH];
    }
    let golden = PI * (3.0 - 5.0_f64.sqrt());
    let n = count as f64;
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Direction::new(r * phi.cos(), r * phi.sin(), z).expect("unit by construction")
        })
        .collect()
}
