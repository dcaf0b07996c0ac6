use image::{Rgb, RgbImage};

use super::codec::{Dictionary, GRID};
use super::pose::Homography;
use crate::error::{Error, Result};

pub const INK: u8 = 20;
pub const PAPER: u8 = 240;

/// Printable marker: the 6×6 grid plus a one-cell white quiet zone, `px`
/// pixels square.
pub fn render_marker_image(dict: &Dictionary, id: u16, px: u32) -> Result<RgbImage> {
    let grid = dict.grid(id).ok_or_else(|| Error::InvalidArgument(format!("id {id} not in dictionary")))?;
    let cells = GRID as u32 + 2;
    if px < cells * 2 {
        return Err(Error::InvalidArgument(format!("marker image needs at least {} px", cells * 2)));
    }
    Ok(RgbImage::from_fn(px, px, |x, y| {
        let (c, r) = ((x * cells / px) as usize, (y * cells / px) as usize);
        let white = r == 0 || c == 0 || r == cells as usize - 1 || c == cells as usize - 1 || grid[r - 1][c - 1];
        Rgb([if white { 255 } else { 0 }; 3])
    }))
}

/// Draws the marker cells (no quiet zone) into `img` with corners given as
/// top-left, bottom-left, bottom-right, top-right in pixel-center
/// coordinates, anti-aliased with `supersample²` samples per pixel.
pub fn render_marker_into(img: &mut RgbImage, dict: &Dictionary, id: u16, corners: &[(f64, f64); 4], supersample: u32) {
    let Some(grid) = dict.grid(id) else { return };
    let g = GRID as f64;
    let src = [(0.0, 0.0), (0.0, g), (g, g), (g, 0.0)];
    let Ok(to_grid) = Homography::from_correspondences(corners, &src) else { return };
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in corners {
        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
    }
    let clampx = |v: f64| v.clamp(0.0, img.width() as f64 - 1.0) as u32;
    let clampy = |v: f64| v.clamp(0.0, img.height() as f64 - 1.0) as u32;
    let (xa, xb, ya, yb) = (clampx(x0.floor()), clampx(x1.ceil()), clampy(y0.floor()), clampy(y1.ceil()));
    let ss = supersample.max(1);
    for py in ya..=yb {
        for px in xa..=xb {
            let mut hits = 0u32;
            let mut sum = 0u32;
            for sy in 0..ss {
                for sx in 0..ss {
                    let x = px as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                    let y = py as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                    let (gx, gy) = to_grid.apply(x, y);
                    if gx >= 0.0 && gy >= 0.0 && gx < g && gy < g {
                        hits += 1;
                        sum += if grid[gy as usize][gx as usize] { PAPER as u32 } else { INK as u32 };
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let total = ss * ss;
            let p = img.get_pixel_mut(px, py);
            for ch in p.0.iter_mut() {
                *ch = ((sum + *ch as u32 * (total - hits)) as f64 / total as f64).round() as u8;
            }
        }
    }
}
