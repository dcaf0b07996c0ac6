use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::PartitionLayout;
use super::solver::{solve_layout, SolverConfig};
use crate::error::{Error, Result};

/// Which form of the per-cap pixel estimate to use.
///
/// `Inverted` (default) counts `N · (θ/360°)² · h·w` source pixels. `Printed`
/// evaluates `N · (360°/θ)² · h·w`, kept for side-by-side comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelCostForm {
    #[default]
    Inverted,
    Printed,
}

/// Weights of the cap-count, pixel and distortion terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub count: f64,
    pub pixels: f64,
    pub distortion: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { count: 0.60, pixels: 0.05, distortion: 0.35 }
    }
}

impl CostWeights {
    /// Weights must be positive, sum to one and keep `count ≥ 5 · pixels`.
    pub fn validate(&self) -> Result<()> {
        let sum = self.count + self.pixels + self.distortion;
        if !(self.count > 0.0 && self.pixels > 0.0 && self.distortion > 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be positive: {self:?}")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, expected 1")));
        }
        if self.count < 5.0 * self.pixels {
            return Err(Error::InvalidArgument(format!(
                "count weight {} must dominate pixel weight {} (>= 5x)",
                self.count, self.pixels
            )));
        }
        Ok(())
    }
}

/// One row of the selection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub n: usize,
    pub theta_deg: f64,
    pub pixel_count: f64,
    pub distortion: f64,
    pub n_term: f64,
    pub pixel_term: f64,
    pub distortion_term: f64,
    pub weights: CostWeights,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best_n: usize,
    pub table: Vec<CostBreakdown>,
}

pub fn pixel_cost(layout: &PartitionLayout, h: usize, w: usize) -> f64 {
    pixel_cost_with(layout.n(), layout.theta_deg(), h, w, PixelCostForm::Inverted)
}

pub fn pixel_cost_with(n: usize, theta_deg: f64, h: usize, w: usize, form: PixelCostForm) -> f64 {
    let ratio = match form {
        PixelCostForm::Inverted => theta_deg / 360.0,
        PixelCostForm::Printed => 360.0 / theta_deg,
    };
    n as f64 * ratio * ratio * (h as f64 * w as f64)
}

/// Corner-magnification distortion `sec³ψ − 1` of a square gnomonic tile with
/// pan = tilt = θ, where ψ is the off-axis angle of the tile corner.
/// Infinite for θ ≥ 180°.
pub fn distortion_metric(theta_deg: f64) -> f64 {
    if theta_deg >= 180.0 {
        return f64::INFINITY;
    }
    if theta_deg <= 0.0 {
        return 0.0;
    }
    let half = (theta_deg / 2.0).to_radians();
    let psi = (std::f64::consts::SQRT_2 * half.tan()).atan();
    psi.cos().powi(-3) - 1.0
}

/// Solves one layout per candidate `N`, then selects as in
/// [`select_from_layouts`].
pub fn select_n(
    candidates: &[usize],
    h: usize,
    w: usize,
    weights: &CostWeights,
    seed: u64,
    solver: &SolverConfig,
    form: PixelCostForm,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate N given".into()));
    }
    weights.validate()?;
    let layouts = candidates
        .par_iter()
        .map(|&n| solve_layout(n, seed, solver))
        .collect::<Result<Vec<_>>>()?;
    select_from_layouts(&layouts, h, w, weights, form)
}

/// Min-max normalizes the count, pixel and distortion columns over the
/// candidates, weights them and returns the argmin (smaller `N` on ties).
pub fn select_from_layouts(
    layouts: &[PartitionLayout],
    h: usize,
    w: usize,
    weights: &CostWeights,
    form: PixelCostForm,
) -> Result<Selection> {
    if layouts.is_empty() {
        return Err(Error::InvalidArgument("no candidate N given".into()));
    }
    weights.validate()?;
    let counts: Vec<f64> = layouts.iter().map(|l| l.n() as f64).collect();
    let pixels: Vec<f64> =
        layouts.iter().map(|l| pixel_cost_with(l.n(), l.theta_deg(), h, w, form)).collect();
    let dist: Vec<f64> = layouts.iter().map(|l| distortion_metric(l.theta_deg())).collect();
    Ok(select_from_columns(&counts, &pixels, &dist, layouts, weights))
}

fn select_from_columns(
    counts: &[f64],
    pixels: &[f64],
    dist: &[f64],
    layouts: &[PartitionLayout],
    weights: &CostWeights,
) -> Selection {
    let (nc, np, nd) = (min_max_normalize(counts), min_max_normalize(pixels), min_max_normalize(dist));
    let table: Vec<CostBreakdown> = layouts
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let total = weights.count * nc[k] + weights.pixels * np[k] + weights.distortion * nd[k];
            CostBreakdown {
                n: l.n(),
                theta_deg: l.theta_deg(),
                pixel_count: pixels[k],
                distortion: dist[k],
                n_term: nc[k],
                pixel_term: np[k],
                distortion_term: nd[k],
                weights: *weights,
                total,
            }
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| a.total.total_cmp(&b.total).then(a.n.cmp(&b.n)))
        .expect("non-empty");
    Selection { best_n: best.n, table }
}

/// Maps finite values onto `[0, 1]`; infinite values map to 1 and a constant
/// column maps to 0.
fn min_max_normalize(xs: &[f64]) -> Vec<f64> {
    let finite = xs.iter().copied().filter(|x| x.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    xs.iter()
        .map(|&x| {
            if !x.is_finite() {
                1.0
            } else if hi > lo {
                (x - lo) / (hi - lo)
            } else {
                0.0
            }
        })
        .collect()
}
