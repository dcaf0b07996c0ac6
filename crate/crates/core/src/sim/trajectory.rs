use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducial::Pose;
use crate::sphere_geometry::Rotation;

/// Closest the body may come to the camera, meters.
pub const MIN_RANGE: f64 = 0.05;

/// Path of the body center in the rig frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Path {
    /// Horizontal circle around the camera.
    Circle { radius: f64, height: f64, angular_rate: f64, phase: f64 },
    /// `center + amplitude ⊙ sin(2π·freq·t + phase)` per axis.
    Lissajous { center: [f64; 3], amplitude: [f64; 3], freq: [f64; 3], phase: [f64; 3] },
    /// Catmull-Rom spline through waypoints, traversed uniformly over the
    /// duration; `closed` joins the last waypoint back to the first.
    WaypointSpline { waypoints: Vec<[f64; 3]>, closed: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: Path,
    /// Seconds.
    pub duration: f64,
    /// Frames per second.
    pub rate: f64,
    /// Body yaw rate about its own vertical axis, rad/s, on top of facing
    /// the camera with its +x face.
    #[serde(default)]
    pub spin_rate: f64,
}

impl Trajectory {
    pub fn new(path: Path, duration: f64, rate: f64, spin_rate: f64) -> Result<Self> {
        let t = Trajectory { path, duration, rate, spin_rate };
        t.validate()?;
        Ok(t)
    }

    /// Slow elliptical orbit 0.6–1.2 m from the camera with a vertical
    /// wobble and a spinning body.
    pub fn standard(duration: f64, rate: f64) -> Self {
        Trajectory {
            path: Path::Lissajous {
                center: [0.0, 0.0, -0.1],
                amplitude: [1.2, 0.6, 0.15],
                freq: [0.04, 0.04, 0.11],
                phase: [PI / 2.0, 0.0, 0.0],
            },
            duration,
            rate,
            spin_rate: 0.4,
        }
    }

    /// Like [`Trajectory::standard`] but 0.4–0.56 m away.
    pub fn close(duration: f64, rate: f64) -> Self {
        Trajectory {
            path: Path::Lissajous {
                center: [0.0, 0.0, -0.05],
                amplitude: [0.55, 0.4, 0.1],
                freq: [0.04, 0.04, 0.11],
                phase: [PI / 2.0, 0.0, 0.0],
            },
            duration,
            rate,
            spin_rate: 0.4,
        }
    }

    /// Named presets for the command line.
    pub fn preset(name: &str, duration: f64, rate: f64) -> Result<Self> {
        let t = match name {
            "standard" => Trajectory::standard(duration, rate),
            "close" => Trajectory::close(duration, rate),
            "circle" => Trajectory {
                path: Path::Circle { radius: 0.9, height: 0.0, angular_rate: 0.25, phase: 0.0 },
                duration,
                rate,
                spin_rate: 0.0,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown trajectory preset '{name}'"))),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration {} must be >= 0", self.duration)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate {} must be positive", self.rate)));
        }
        match &self.path {
            Path::WaypointSpline { waypoints, .. } if waypoints.len() < 2 => {
                return Err(Error::InvalidArgument("a spline needs at least two waypoints".into()))
            }
            Path::Circle { radius, .. } if !(*radius > 0.0) => {
                return Err(Error::InvalidArgument("circle radius must be positive".into()))
            }
            _ => {}
        }
        // Dense check of the range constraint.
        let samples = ((self.duration * 200.0).ceil() as usize).max(1);
        for k in 0..=samples {
            let t = self.duration * k as f64 / samples as f64;
            let r = self.position(t).norm();
            if !(r > MIN_RANGE) {
                return Err(Error::InvalidArgument(format!("range {r:.3} m at t={t:.3} s is inside the camera")));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.rate + 1e-9).floor() as usize
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.rate
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        match &self.path {
            Path::Circle { radius, height, angular_rate, phase } => {
                let a = phase + angular_rate * t;
                Vector3::new(radius * a.cos(), radius * a.sin(), *height)
            }
            Path::Lissajous { center, amplitude, freq, phase } => Vector3::from_fn(|i, _| {
                center[i] + amplitude[i] * (2.0 * PI * freq[i] * t + phase[i]).sin()
            }),
            Path::WaypointSpline { waypoints, closed } => spline(waypoints, *closed, t, self.duration),
        }
    }

    /// Body pose at `t`: upright, yawed so its +x face looks at the camera,
    /// plus the spin.
    pub fn pose(&self, t: f64) -> Pose {
        let p = self.position(t);
        let yaw = (-p.y).atan2(-p.x) + self.spin_rate * t;
        Pose::new(Rotation::from_axis_angle(&Vector3::z(), yaw), p)
    }
}

fn spline(w: &[[f64; 3]], closed: bool, t: f64, duration: f64) -> Vector3<f64> {
    let pts: Vec<Vector3<f64>> = w.iter().map(|p| Vector3::from(*p)).collect();
    let n = pts.len();
    let segments = if closed { n } else { n - 1 };
    let u = if duration > 0.0 { (t / duration).clamp(0.0, 1.0) } else { 0.0 } * segments as f64;
    let seg = (u.floor() as usize).min(segments - 1);
    let f = u - seg as f64;
    let at = |i: isize| -> Vector3<f64> {
        if closed {
            pts[i.rem_euclid(n as isize) as usize]
        } else {
            pts[i.clamp(0, n as isize - 1) as usize]
        }
    };
    let i = seg as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let (f2, f3) = (f * f, f * f * f);
    0.5 * ((2.0 * p1) + (p2 - p0) * f + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2 + (3.0 * p1 - p0 - 3.0 * p2 + p3) * f3)
}
