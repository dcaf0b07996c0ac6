use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sphere_geometry::{fibonacci_sphere, Direction};

/// Sampling density and refinement effort for [`covering_angle_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringConfig {
    pub samples: usize,
    pub refine_iterations: usize,
    /// Number of deepest samples used as hill-climbing seeds.
    pub refine_seeds: usize,
}

impl Default for CoveringConfig {
    fn default() -> Self {
        CoveringConfig { samples: 200_000, refine_iterations: 20, refine_seeds: 24 }
    }
}

/// Covering "diameter" angle θ in degrees for the default sampling settings.
pub fn covering_angle(centers: &[Direction]) -> f64 {
    covering_angle_with(centers, &CoveringConfig::default())
}

/// θ = 2 × (largest distance from any point of the sphere to its nearest
/// center), in degrees. The deepest hole is located on a Fibonacci sample and
/// then refined by hill climbing.
pub fn covering_angle_with(centers: &[Direction], cfg: &CoveringConfig) -> f64 {
    match centers.len() {
        0 => return f64::NAN,
        1 => return 360.0,
        _ => {}
    }
    let cs: Vec<Vector3<f64>> = centers.iter().map(|c| *c.as_vector()).collect();
    let samples = fibonacci_sphere(cfg.samples.max(1));

    // Depth is tracked as the best dot product; smaller dot = deeper hole.
    let mut depths: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (nearest_dot(&cs, s.as_vector()), i))
        .collect();
    let k = cfg.refine_seeds.clamp(1, depths.len());
    depths.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seeds: Vec<(f64, usize)> = depths[..k].to_vec();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let spacing = (4.0 * PI / samples.len() as f64).sqrt();
    let mut worst_dot = seeds[0].0;
    for &(_, idx) in &seeds {
        let d = hill_climb(&cs, *samples[idx].as_vector(), spacing, cfg.refine_iterations);
        worst_dot = worst_dot.min(d);
    }
    2.0 * worst_dot.clamp(-1.0, 1.0).acos().to_degrees()
}

fn nearest_dot(cs: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
    cs.iter().map(|c| c.dot(p)).fold(f64::NEG_INFINITY, f64::max)
}

/// Moves `p` to lower its nearest-center dot product; returns the final value.
fn hill_climb(cs: &[Vector3<f64>], mut p: Vector3<f64>, spacing: f64, iterations: usize) -> f64 {
    const DIRS: usize = 8;
    let mut value = nearest_dot(cs, &p);
    let mut step = spacing;
    for _ in 0..iterations {
        let (e1, e2) = tangent_basis(&p);
        let mut best = (value, p);
        for k in 0..DIRS {
            let a = 2.0 * PI * k as f64 / DIRS as f64;
            let t = e1 * a.cos() + e2 * a.sin();
            let q = (p * step.cos() + t * step.sin()).normalize();
            let v = nearest_dot(cs, &q);
            if v < best.0 {
                best = (v, q);
            }
        }
        if best.0 < value {
            value = best.0;
            p = best.1;
        } else {
            step *= 0.5;
        }
    }
    value
}

fn tangent_basis(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if p.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = p.cross(&helper).normalize();
    let e2 = p.cross(&e1);
    (e1, e2)
}
