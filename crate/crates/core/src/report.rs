//! Summaries over tracker result tables, plus a distance-vs-time plot.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRow {
    pub frame: usize,
    pub found: u8,
    pub partition: Option<usize>,
    pub detector_calls: usize,
    pub est_x: Option<f64>,
    pub est_y: Option<f64>,
    pub est_z: Option<f64>,
    pub est_qw: Option<f64>,
    pub est_qx: Option<f64>,
    pub est_qy: Option<f64>,
    pub est_qz: Option<f64>,
    pub elapsed_ms: f64,
}

impl ResultRow {
    pub fn position(&self) -> Option<Vector3<f64>> {
        Some(Vector3::new(self.est_x?, self.est_y?, self.est_z?))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TruthRow {
    pub frame: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl TruthRow {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| Error::format(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(path)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    read_csv(path)
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub frames: usize,
    pub localizations: usize,
    pub mean_detector_calls: f64,
    /// `None` without ground truth or without any estimate.
    pub mean_abs_distance_error_m: Option<f64>,
    pub mean_position_error_m: Option<f64>,
    pub elapsed_ms: f64,
}

/// Frames whose `detector_calls` is zero (dropped) are excluded from the
/// call average.
pub fn summarize_run(label: &str, rows: &[ResultRow], truth: Option<&[TruthRow]>) -> RunSummary {
    let processed: Vec<&ResultRow> = rows.iter().filter(|r| r.detector_calls > 0).collect();
    let mean_calls = if processed.is_empty() {
        0.0
    } else {
        processed.iter().map(|r| r.detector_calls as f64).sum::<f64>() / processed.len() as f64
    };
    let (mut dist, mut pos, mut count) = (0.0, 0.0, 0usize);
    if let Some(truth) = truth {
        for r in rows {
            let (Some(est), Some(t)) = (r.position(), truth.iter().find(|t| t.frame == r.frame)) else { continue };
            dist += (est.norm() - t.position().norm()).abs();
            pos += (est - t.position()).norm();
            count += 1;
        }
    }
    RunSummary {
        label: label.to_string(),
        frames: rows.len(),
        localizations: rows.iter().filter(|r| r.found == 1).count(),
        mean_detector_calls: mean_calls,
        mean_abs_distance_error_m: (count > 0).then(|| dist / count as f64),
        mean_position_error_m: (count > 0).then(|| pos / count as f64),
        elapsed_ms: rows.iter().map(|r| r.elapsed_ms).sum(),
    }
}

pub fn summary_csv(runs: &[RunSummary]) -> String {
    let mut out =
        String::from("run,frames,localizations,mean_detector_calls,mean_abs_distance_error_m,mean_position_error_m,elapsed_ms\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{},{},{:.3}",
            r.label,
            r.frames,
            r.localizations,
            r.mean_detector_calls,
            opt(r.mean_abs_distance_error_m),
            opt(r.mean_position_error_m),
            r.elapsed_ms
        );
    }
    out
}

const PALETTE: [[u8; 3]; 6] = [[214, 39, 40], [31, 119, 180], [44, 160, 44], [255, 127, 14], [148, 103, 189], [23, 190, 207]];

/// Estimated range per run against true range, one colored trace per run
/// (truth in black), on a light grid of 0.1 m and 10 s.
pub fn distance_plot(truth: &[TruthRow], runs: &[(String, Vec<ResultRow>)], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let t_of = |frame: usize| truth.iter().find(|t| t.frame == frame).map(|t| t.t);
    let t_max = truth.iter().map(|t| t.t).fold(0.0f64, f64::max).max(1e-9);
    let mut r_max = truth.iter().map(|t| t.position().norm()).fold(0.0f64, f64::max);
    for (_, rows) in runs {
        for r in rows {
            if let Some(p) = r.position() {
                r_max = r_max.max(p.norm());
            }
        }
    }
    let r_max = (r_max * 1.1).max(0.1);
    let pad = 20.0;
    let (w, h) = (width as f64 - 2.0 * pad, height as f64 - 2.0 * pad);
    let to_px = |t: f64, r: f64| (pad + t / t_max * w, pad + h - r / r_max * h);
    let grid = Rgb([225, 225, 225]);
    let mut r = 0.0;
    while r <= r_max {
        let (_, y) = to_px(0.0, r);
        line(&mut img, (pad, y), (pad + w, y), grid);
        r += 0.1;
    }
    let mut t = 0.0;
    while t <= t_max {
        let (x, _) = to_px(t, 0.0);
        line(&mut img, (x, pad), (x, pad + h), grid);
        t += 10.0;
    }
    let axis = Rgb([90, 90, 90]);
    line(&mut img, (pad, pad + h), (pad + w, pad + h), axis);
    line(&mut img, (pad, pad), (pad, pad + h), axis);
    for (k, (_, rows)) in runs.iter().enumerate() {
        let color = Rgb(PALETTE[k % PALETTE.len()]);
        let mut prev: Option<(usize, (f64, f64))> = None;
        for r in rows {
            let (Some(p), Some(t)) = (r.position(), t_of(r.frame)) else {
                prev = None;
                continue;
            };
            let q = to_px(t, p.norm());
            match prev {
                Some((f, a)) if r.frame == f + 1 => line(&mut img, a, q, color),
                _ => dot(&mut img, q, color),
            }
            prev = Some((r.frame, q));
        }
    }
    let black = Rgb([0, 0, 0]);
    for pair in truth.windows(2) {
        line(&mut img, to_px(pair[0].t, pair[0].position().norm()), to_px(pair[1].t, pair[1].position().norm()), black);
    }
    img
}

fn put(img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>) {
    let (x, y) = (x.round(), y.round());
    if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn dot(img: &mut RgbImage, p: (f64, f64), c: Rgb<u8>) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, p.0 + dx as f64, p.1 + dy as f64, c);
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let f = i as f64 / steps as f64;
        put(img, a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1), c);
    }
}
