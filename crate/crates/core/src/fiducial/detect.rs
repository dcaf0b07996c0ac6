//! Image-space marker finder: adaptive threshold, connected components,
//! convex-hull quad fit, sub-pixel edge lines and grid decoding.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::codec::{Dictionary, GRID};
use super::pose::{polygon_area, Homography};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// A pixel is dark when it is this fraction below its local mean.
    pub threshold_ratio: f64,
    /// Smallest half-width of the local-mean window, pixels.
    pub window_radius_min: u32,
    /// Smallest accepted quad side, pixels.
    pub min_side_px: f64,
    /// Largest accepted bit error count (0 or 1).
    pub max_bit_errors: u32,
    /// Smallest white-minus-black difference, gray levels.
    pub min_contrast: f64,
    /// Gauss-Newton polish of every marker pose; poses whose corner
    /// reprojection RMS exceeds `max_reprojection_px` are polished anyway.
    pub refine_pose: bool,
    /// Poses still above this corner RMS after polishing are dropped.
    pub max_reprojection_px: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold_ratio: 0.08,
            window_radius_min: 7,
            min_side_px: 12.0,
            max_bit_errors: 1,
            min_contrast: 25.0,
            refine_pose: false,
            max_reprojection_px: 1.0,
        }
    }
}

/// A decoded quad. Corners are top-left, bottom-left, bottom-right,
/// top-right of the marker as printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerCandidate {
    pub id: u16,
    pub corners: [(f64, f64); 4],
    pub bit_errors: u32,
}

/// Row-major luma plane.
#[derive(Debug, Clone)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Gray {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        Gray { width: img.width() as usize, height: img.height() as usize, data }
    }

    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear lookup at pixel-center coordinates, clamped at the border.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let (x, y) = (x.clamp(0.0, xm), y.clamp(0.0, ym));
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.at(x0, y0) as f64 * (1.0 - fx) + self.at(x1, y0) as f64 * fx;
        let bot = self.at(x0, y1) as f64 * (1.0 - fx) + self.at(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

pub fn detect_candidates(img: &RgbImage, dict: &Dictionary, cfg: &DetectorConfig) -> Vec<MarkerCandidate> {
    let gray = Gray::from_rgb(img);
    if gray.width < 8 || gray.height < 8 {
        return Vec::new();
    }
    let dark = adaptive_threshold(&gray, cfg);
    let mut found: Vec<(f64, MarkerCandidate)> = Vec::new();
    for comp in dark_components(&dark, gray.width, gray.height) {
        let Some(quad) = fit_quad(&comp, cfg) else { continue };
        let quad = refine_quad(&gray, quad);
        if let Some(c) = decode_quad(&gray, &quad, dict, cfg) {
            found.push((polygon_area(&quad), c));
        }
    }
    // One candidate per id: keep the largest.
    found.sort_by(|a, b| a.1.id.cmp(&b.1.id).then(b.0.total_cmp(&a.0)));
    found.dedup_by(|b, a| a.1.id == b.1.id);
    found.into_iter().map(|(_, c)| c).collect()
}

fn adaptive_threshold(g: &Gray, cfg: &DetectorConfig) -> Vec<bool> {
    let (w, h) = (g.width, g.height);
    let mut integral = vec![0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0f64;
        for x in 0..w {
            row += g.at(x, y) as f64;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let r = (cfg.window_radius_min as usize).max(w.min(h) / 8);
    let ratio = 1.0 - cfg.threshold_ratio;
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            let mean = sum / ((x1 - x0) * (y1 - y0)) as f64;
            out[y * w + x] = (g.at(x, y) as f64) < mean * ratio - 2.0;
        }
    }
    out
}

/// Boundary pixels of each 8-connected dark component that does not touch
/// the image border.
fn dark_components(dark: &[bool], w: usize, h: usize) -> Vec<Vec<(f64, f64)>> {
    let mut label = vec![u32::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    let mut members = Vec::new();
    for start in 0..w * h {
        if !dark[start] || label[start] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        label[start] = id;
        stack.push(start);
        members.clear();
        let mut touches = false;
        while let Some(p) = stack.pop() {
            members.push(p);
            let (x, y) = (p % w, p / w);
            touches |= x == 0 || y == 0 || x == w - 1 || y == h - 1;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if dark[q] && label[q] == u32::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        let boundary: Vec<(f64, f64)> = if touches || members.len() < 16 {
            Vec::new()
        } else {
            members
                .iter()
                .filter(|&&p| {
                    let (x, y) = (p % w, p / w);
                    [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)].iter().any(|&(a, b)| label[b * w + a] != id)
                })
                .map(|&p| ((p % w) as f64, (p / w) as f64))
                .collect()
        };
        comps.push(boundary);
    }
    comps.into_iter().filter(|b| !b.is_empty()).collect()
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Four hull vertices spanning the largest quadrilateral, in positive-area
/// order; `None` when the hull is not quad-like.
fn fit_quad(boundary: &[(f64, f64)], cfg: &DetectorConfig) -> Option<[(f64, f64); 4]> {
    let hull = convex_hull(boundary.to_vec());
    let m = hull.len();
    if m < 4 {
        return None;
    }
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let (mut ia, mut ic, mut best) = (0, 0, -1.0);
    for i in 0..m {
        for j in i + 1..m {
            let d = d2(hull[i], hull[j]);
            if d > best {
                (ia, ic, best) = (i, j, d);
            }
        }
    }
    let side = |a: (f64, f64), b: (f64, f64), p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let (a, c) = (hull[ia], hull[ic]);
    let ib = (0..m).max_by(|&x, &y| side(a, c, hull[x]).total_cmp(&side(a, c, hull[y])))?;
    let id = (0..m).min_by(|&x, &y| side(a, c, hull[x]).total_cmp(&side(a, c, hull[y])))?;
    let mut idx = [ia, ib, ic, id];
    let area = |idx: &[usize; 4]| polygon_area(&idx.map(|k| hull[k])).abs();
    for _ in 0..4 {
        let mut changed = false;
        for slot in 0..4 {
            let mut best = (area(&idx), idx[slot]);
            for k in 0..m {
                let mut trial = idx;
                trial[slot] = k;
                let a = area(&trial);
                if a > best.0 + 1e-9 {
                    best = (a, k);
                }
            }
            if best.1 != idx[slot] {
                idx[slot] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut quad = idx.map(|k| hull[k]);
    if polygon_area(&quad) < 0.0 {
        quad.swap(1, 3);
    }
    let quad_area = polygon_area(&quad);
    let hull_area = polygon_area(&hull).abs();
    let sides: Vec<f64> = (0..4).map(|i| d2(quad[i], quad[(i + 1) % 4]).sqrt()).collect();
    let (smin, smax) = sides.iter().fold((f64::INFINITY, 0f64), |a, &s| (a.0.min(s), a.1.max(s)));
    // Thresholding rounds corners, which costs small quads about half a pixel
    // along the perimeter on top of the relative slack.
    let perimeter: f64 = sides.iter().sum();
    if quad_area <= 0.0 || hull_area - quad_area > 0.1 * hull_area + 0.5 * perimeter || smin < cfg.min_side_px || smax > 4.0 * smin {
        log::trace!("quad rejected: area {quad_area:.1} hull {hull_area:.1} sides {smin:.1}..{smax:.1}");
        return None;
    }
    Some(quad)
}

/// Re-fits each side to the dark-to-light gradient peak and intersects the
/// lines. Falls back to the input when a side cannot be measured.
fn refine_quad(g: &Gray, quad: [(f64, f64); 4]) -> [(f64, f64); 4] {
    let mut q = quad;
    for _ in 0..2 {
        match refine_once(g, &q) {
            Some(next) => q = next,
            None => break,
        }
    }
    q
}

fn refine_once(g: &Gray, q: &[(f64, f64); 4]) -> Option<[(f64, f64); 4]> {
    let perimeter: f64 = (0..4).map(|i| dist(q[i], q[(i + 1) % 4])).sum();
    let cell = perimeter / 4.0 / GRID as f64;
    let reach = (0.4 * cell).clamp(1.5, 4.0);
    let mut lines = [((0.0, 0.0), (0.0, 0.0)); 4];
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let len = dist(a, b);
        let dir = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let normal = (dir.1, -dir.0);
        let count = ((len / 1.5) as usize).clamp(6, 40);
        let mut pts = Vec::with_capacity(count);
        for k in 0..count {
            let t = 0.12 + 0.76 * k as f64 / (count - 1) as f64;
            let base = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            if let Some(s) = edge_offset(g, base, normal, reach) {
                pts.push((base.0 + s * normal.0, base.1 + s * normal.1));
            }
        }
        if pts.len() < 4 {
            return None;
        }
        lines[i] = fit_line(&pts)?;
    }
    let mut out = [(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = intersect(lines[(i + 3) % 4], lines[i])?;
        if dist(out[i], q[i]) > 2.0 * reach + 1.0 {
            return None;
        }
    }
    (polygon_area(&out) > 0.0).then_some(out)
}

/// Offset along `normal` of the strongest dark-to-light step within `reach`:
/// centroid of the rising gradient around its peak.
fn edge_offset(g: &Gray, base: (f64, f64), normal: (f64, f64), reach: f64) -> Option<f64> {
    const STEP: f64 = 0.25;
    const HALF_WINDOW: i64 = 6;
    let n = (reach / STEP) as i64 + HALF_WINDOW;
    let at = |s: f64| g.sample(base.0 + s * normal.0, base.1 + s * normal.1);
    let deriv: Vec<f64> = (-n..=n).map(|k| at((k as f64 + 0.5) * STEP) - at((k as f64 - 0.5) * STEP)).collect();
    let inner = HALF_WINDOW as usize..deriv.len() - HALF_WINDOW as usize;
    let k = inner.max_by(|&a, &b| deriv[a].total_cmp(&deriv[b]))?;
    let (mut mass, mut moment) = (0.0, 0.0);
    for j in k - HALF_WINDOW as usize..=k + HALF_WINDOW as usize {
        let d = deriv[j].max(0.0);
        mass += d;
        moment += d * (j as f64 - n as f64) * STEP;
    }
    (mass >= 15.0).then(|| moment / mass)
}

/// Total-least-squares line through points: (centroid, unit direction).
fn fit_line(pts: &[(f64, f64)]) -> Option<((f64, f64), (f64, f64))> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = (angle.cos(), angle.sin());
    (sxx + syy > 0.0).then_some(((mx, my), dir))
}

fn intersect(l1: ((f64, f64), (f64, f64)), l2: ((f64, f64), (f64, f64))) -> Option<(f64, f64)> {
    let ((p, d), (q, e)) = (l1, l2);
    let den = d.0 * e.1 - d.1 * e.0;
    if den.abs() < 1e-9 {
        return None;
    }
    let t = ((q.0 - p.0) * e.1 - (q.1 - p.1) * e.0) / den;
    Some((p.0 + t * d.0, p.1 + t * d.1))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Samples the cell grid under each of the four corner assignments and
/// keeps the one that decodes upright.
fn decode_quad(g: &Gray, quad: &[(f64, f64); 4], dict: &Dictionary, cfg: &DetectorConfig) -> Option<MarkerCandidate> {
    let gs = GRID as f64;
    let grid_corners = [(0.0, 0.0), (gs, 0.0), (gs, gs), (0.0, gs)];
    for shift in 0..4 {
        let q: [(f64, f64); 4] = std::array::from_fn(|j| quad[(j + shift) % 4]);
        let Ok(h) = Homography::from_correspondences(&grid_corners, &q) else { continue };
        let cells = sample_cells(g, &h)?;

        let mut black: Vec<f64> = Vec::new();
        for r in 0..GRID {
            for c in 0..GRID {
                if r == 0 || c == 0 || r == GRID - 1 || c == GRID - 1 {
                    black.push(cells[r][c]);
                }
            }
        }
        let black_ref = median(&mut black.clone());
        let mut quiet = Vec::new();
        for k in 0..GRID {
            let t = k as f64 + 0.5;
            for (x, y) in [(t, -0.5), (t, gs + 0.5), (-0.5, t), (gs + 0.5, t)] {
                let (u, v) = h.apply(x, y);
                if !g.inside(u, v) {
                    return None;
                }
                quiet.push(g.sample(u, v));
            }
        }
        let white_ref = median(&mut quiet);
        if white_ref - black_ref < cfg.min_contrast {
            log::trace!("low contrast: black {black_ref:.1} white {white_ref:.1}");
            return None;
        }
        let thr = 0.5 * (white_ref + black_ref);
        if black.iter().any(|&b| b >= thr) {
            log::trace!("border not dark at {quad:?}");
            return None;
        }
        let mut code = 0u16;
        for r in 0..4 {
            for c in 0..4 {
                if cells[r + 1][c + 1] > thr {
                    code |= 1 << (15 - (r * 4 + c));
                }
            }
        }
        match dict.decode(code) {
            Some(d) if d.turns == 0 && d.bit_errors <= cfg.max_bit_errors => {
                // q is TL, TR, BR, BL; report TL, BL, BR, TR.
                return Some(MarkerCandidate { id: d.id, corners: [q[0], q[3], q[2], q[1]], bit_errors: d.bit_errors });
            }
            Some(_) => continue,
            None => {
                log::trace!("code {code:016b} not in the dictionary");
                return None;
            }
        }
    }
    None
}

/// Mean of a 3×3 lattice over the central half of every cell.
fn sample_cells(g: &Gray, h: &Homography) -> Option<[[f64; GRID]; GRID]> {
    let mut out = [[0.0; GRID]; GRID];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut sum = 0.0;
            for dy in [0.25, 0.5, 0.75] {
                for dx in [0.25, 0.5, 0.75] {
                    let (u, v) = h.apply(c as f64 + dx, r as f64 + dy);
                    if !g.inside(u, v) {
                        return None;
                    }
                    sum += g.sample(u, v);
                }
            }
            *cell = sum / 9.0;
        }
    }
    Some(out)
}
