//! Equirectangular frames and their rectification into square pinhole tiles.
//!
//! Pixel `(col, row)` of a `w × h` equirectangular frame has its center at
//! `lon = −π + (col + ½)·2π/w`, `lat = π/2 − (row + ½)·π/h`. A tile of side
//! `s` and field of view `fov` is a pinhole camera with focal length
//! `f = (s/2)/tan(fov/2)` and principal point `((s−1)/2, (s−1)/2)`; its pixel
//! `u` grows to the right and `v` downwards, with "up" set by
//! [`rotation_aligning`].

use std::f64::consts::PI;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionLayout;
use crate::sphere_geometry::{dir_to_geo, geo_to_dir, rotation_aligning, Direction, GeoCoord, Rotation};

pub const MIN_TILE_SIDE: u32 = 16;

/// Full-sphere equirectangular RGB frame, `width = 2 · height`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    pixels: RgbImage,
}

impl EquirectImage {
    pub fn new(pixels: RgbImage) -> Result<Self> {
        let (w, h) = pixels.dimensions();
        if h == 0 || w != 2 * h {
            return Err(Error::InvalidArgument(format!(
                "equirectangular frame must be 2h x h, got {w} x {h}"
            )));
        }
        Ok(EquirectImage { pixels })
    }

    /// Fills every pixel from its center coordinate, rows in parallel.
    pub fn from_fn<F>(width: u32, height: u32, f: F) -> Result<Self>
    where
        F: Fn(GeoCoord) -> [u8; 3] + Sync,
    {
        if height == 0 || width != 2 * height {
            return Err(Error::InvalidArgument(format!(
                "equirectangular frame must be 2h x h, got {width} x {height}"
            )));
        }
        let mut buf = vec![0u8; width as usize * height as usize * 3];
        buf.par_chunks_mut(width as usize * 3).enumerate().for_each(|(row, line)| {
            for col in 0..width as usize {
                let g = pixel_center_geo(col as f64, row as f64, width, height);
                line[col * 3..col * 3 + 3].copy_from_slice(&f(g));
            }
        });
        Self::new(RgbImage::from_raw(width, height, buf).expect("buffer sized to dims"))
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn into_pixels(self) -> RgbImage {
        self.pixels
    }

    /// Geographic coordinate of the center of pixel `(col, row)`.
    pub fn pixel_to_geo(&self, col: u32, row: u32) -> GeoCoord {
        pixel_center_geo(col as f64, row as f64, self.width(), self.height())
    }

    /// Continuous pixel position `(x, y)` of a coordinate; integer values are
    /// pixel centers.
    pub fn geo_to_pixel(&self, g: &GeoCoord) -> (f64, f64) {
        geo_to_pixel(g, self.width(), self.height())
    }

    /// Source sampling density in pixels per radian (along a meridian).
    pub fn pixels_per_radian(&self) -> f64 {
        self.height() as f64 / PI
    }

    pub fn sample(&self, g: &GeoCoord, interp: Interpolation) -> [u8; 3] {
        let (x, y) = self.geo_to_pixel(g);
        match interp {
            Interpolation::Bilinear => self.sample_bilinear(x, y),
            Interpolation::Nearest => self.sample_nearest(x, y),
        }
    }

    fn wrap_col(&self, c: i64) -> u32 {
        c.rem_euclid(self.width() as i64) as u32
    }

    fn clamp_row(&self, r: i64) -> u32 {
        r.clamp(0, self.height() as i64 - 1) as u32
    }

    fn sample_nearest(&self, x: f64, y: f64) -> [u8; 3] {
        let c = self.wrap_col(x.round() as i64);
        let r = self.clamp_row(y.round() as i64);
        self.pixels.get_pixel(c, r).0
    }

    fn sample_bilinear(&self, x: f64, y: f64) -> [u8; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (c0, c1) = (self.wrap_col(x0 as i64), self.wrap_col(x0 as i64 + 1));
        let (r0, r1) = (self.clamp_row(y0 as i64), self.clamp_row(y0 as i64 + 1));
        let p = |c, r| self.pixels.get_pixel(c, r).0;
        let (a, b, c, d) = (p(c0, r0), p(c1, r0), p(c0, r1), p(c1, r1));
        let mut out = [0u8; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bot = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(load_rgb(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_rgb(&self.pixels, path)
    }
}

pub(crate) fn pixel_center_geo(col: f64, row: f64, width: u32, height: u32) -> GeoCoord {
    let lon = -PI + (col + 0.5) * 2.0 * PI / width as f64;
    let lat = PI / 2.0 - (row + 0.5) * PI / height as f64;
    GeoCoord::new(lat, lon)
}

pub(crate) fn geo_to_pixel(g: &GeoCoord, width: u32, height: u32) -> (f64, f64) {
    let x = (g.lon + PI) / (2.0 * PI) * width as f64 - 0.5;
    let y = (PI / 2.0 - g.lat) / PI * height as f64 - 0.5;
    (x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Pinhole intrinsics of a square tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeIntrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeIntrinsics {
    pub fn for_tile(side: u32, fov_deg: f64) -> Self {
        let half = side as f64 / 2.0;
        let c = (side as f64 - 1.0) / 2.0;
        PinholeIntrinsics { focal: half / (fov_deg.to_radians() / 2.0).tan(), cx: c, cy: c }
    }

    /// Projects a point in the OpenCV camera frame (x right, y down, z forward).
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.cx + self.focal * p.x / p.z, self.cy + self.focal * p.y / p.z))
    }
}

/// Maps OpenCV camera coordinates (x right, y down, z forward) into the
/// canonical tile frame (forward, left, up).
pub fn cv_to_canonical() -> Rotation {
    Rotation::from_matrix_unchecked(nalgebra::Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    ))
}

/// A square pinhole tile cut from an equirectangular frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedView {
    image: RgbImage,
    geometry: ViewGeometry,
}

/// Everything about a tile except its pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub fov_deg: f64,
    pub side: u32,
    /// Tile-to-world rotation of the canonical frame (forward, left, up).
    pub orientation: Rotation,
    pub partition_index: usize,
}

impl ViewGeometry {
    pub fn new(center: &Direction, fov_deg: f64, side: u32, partition_index: usize) -> Result<Self> {
        Self::with_orientation(rotation_aligning(center), fov_deg, side, partition_index)
    }

    pub fn with_orientation(orientation: Rotation, fov_deg: f64, side: u32, partition_index: usize) -> Result<Self> {
        if !(fov_deg < 180.0) {
            return Err(Error::FovTooWide { fov_deg });
        }
        if !(fov_deg > 0.0) {
            return Err(Error::InvalidArgument(format!("fov {fov_deg} must be positive")));
        }
        if side < MIN_TILE_SIDE {
            return Err(Error::InvalidArgument(format!("tile side {side} below minimum {MIN_TILE_SIDE}")));
        }
        Ok(ViewGeometry { fov_deg, side, orientation, partition_index })
    }

    pub fn intrinsics(&self) -> PinholeIntrinsics {
        PinholeIntrinsics::for_tile(self.side, self.fov_deg)
    }

    pub fn center(&self) -> Direction {
        self.orientation.apply_dir(&Direction::AXIS)
    }

    /// Tile-camera (OpenCV convention) to world rotation.
    pub fn camera_to_world(&self) -> Rotation {
        self.orientation.compose(&cv_to_canonical())
    }

    /// World direction of the ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Direction {
        let k = self.intrinsics();
        let canonical = Vector3::new(1.0, -(u - k.cx) / k.focal, -(v - k.cy) / k.focal);
        Direction::from_vector(self.orientation.apply(&canonical)).expect("ray is non-zero")
    }

    /// Pixel position of a world direction, or `None` when it is behind the
    /// tile plane or outside the tile.
    pub fn direction_to_pixel(&self, d: &Direction) -> Option<(f64, f64)> {
        let (u, v) = self.project_unbounded(d.as_vector())?;
        self.contains_pixel(u, v, 0.0).then_some((u, v))
    }

    /// Projects a world-frame vector (any length) without bounds checks.
    pub fn project_unbounded(&self, v: &Vector3<f64>) -> Option<(f64, f64)> {
        let r = self.orientation.transpose().apply(v);
        if r.x <= 0.0 {
            return None;
        }
        let k = self.intrinsics();
        Some((k.cx - k.focal * r.y / r.x, k.cy - k.focal * r.z / r.x))
    }

    /// Whether `(u, v)` lies at least `margin` pixels inside the tile's
    /// pixel-area bounds `[−½, s − ½]`.
    pub fn contains_pixel(&self, u: f64, v: f64, margin: f64) -> bool {
        let lo = -0.5 + margin;
        let hi = self.side as f64 - 0.5 - margin;
        u >= lo && u <= hi && v >= lo && v <= hi
    }
}

impl RectifiedView {
    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn geometry(&self) -> &ViewGeometry {
        &self.geometry
    }

    pub fn side(&self) -> u32 {
        self.geometry.side
    }

    pub fn fov_deg(&self) -> f64 {
        self.geometry.fov_deg
    }

    pub fn orientation(&self) -> &Rotation {
        &self.geometry.orientation
    }

    pub fn partition_index(&self) -> usize {
        self.geometry.partition_index
    }

    pub fn intrinsics(&self) -> PinholeIntrinsics {
        self.geometry.intrinsics()
    }

    pub fn direction_to_pixel(&self, d: &Direction) -> Option<(f64, f64)> {
        self.geometry.direction_to_pixel(d)
    }

    pub fn from_parts(image: RgbImage, geometry: ViewGeometry) -> Result<Self> {
        if image.dimensions() != (geometry.side, geometry.side) {
            return Err(Error::InvalidArgument("tile image does not match its geometry".into()));
        }
        Ok(RectifiedView { image, geometry })
    }
}

/// Value of tile pixel `(u, v)`; depends on nothing but its arguments.
pub fn rectified_pixel(src: &EquirectImage, geometry: &ViewGeometry, u: u32, v: u32, interp: Interpolation) -> [u8; 3] {
    let ray = geometry.pixel_ray(u as f64, v as f64);
    src.sample(&dir_to_geo(&ray), interp)
}

pub fn rectify_partition(src: &EquirectImage, center: &Direction, fov_deg: f64, side: u32) -> Result<RectifiedView> {
    rectify_view(src, ViewGeometry::new(center, fov_deg, side, 0)?, Interpolation::Bilinear)
}

/// Renders a tile for an arbitrary geometry, rows in parallel.
pub fn rectify_view(src: &EquirectImage, geometry: ViewGeometry, interp: Interpolation) -> Result<RectifiedView> {
    let s = geometry.side as usize;
    let mut buf = vec![0u8; s * s * 3];
    buf.par_chunks_mut(s * 3).enumerate().for_each(|(v, line)| {
        for u in 0..s {
            let px = rectified_pixel(src, &geometry, u as u32, v as u32, interp);
            line[u * 3..u * 3 + 3].copy_from_slice(&px);
        }
    });
    let image = RgbImage::from_raw(geometry.side, geometry.side, buf).expect("sized buffer");
    RectifiedView::from_parts(image, geometry)
}

/// Tile geometries for every cap of a layout, in partition order.
pub fn layout_views(layout: &PartitionLayout, side: u32) -> Result<Vec<ViewGeometry>> {
    layout
        .centers()
        .iter()
        .enumerate()
        .map(|(i, c)| ViewGeometry::new(c, layout.theta_deg(), side, i))
        .collect()
}

/// One tile per cap, fov = θ, ordered by partition index.
pub fn rectify_all(src: &EquirectImage, layout: &PartitionLayout, side: u32) -> Result<Vec<RectifiedView>> {
    let views = layout_views(layout, side)?;
    views.into_par_iter().map(|g| rectify_view(src, g, Interpolation::Bilinear)).collect()
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    Ok(reader.decode()?.to_rgb8())
}

/// Writes PNG, or binary PPM (P6) when the extension is `.ppm`.
pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let is_ppm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
    } else {
        img.save_with_format(path, ImageFormat::Png).map_err(Error::from)
    }
}

/// Binary PPM with a `P6\n<w> <h>\n255\n` header.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

/// Geographic direction sampled by tile pixel `(u, v)`; handy for tests and the CLI.
pub fn tile_pixel_geo(geometry: &ViewGeometry, u: f64, v: f64) -> GeoCoord {
    dir_to_geo(&geometry.pixel_ray(u, v))
}

/// Color of a frame at a world direction, bilinear.
pub fn sample_direction(src: &EquirectImage, d: &Direction) -> [u8; 3] {
    src.sample(&dir_to_geo(d), Interpolation::Bilinear)
}

/// Resamples a frame as seen after rotating the world by `q`.
pub fn rotate_equirect(src: &EquirectImage, q: &Rotation) -> EquirectImage {
    let inv = q.transpose();
    EquirectImage::from_fn(src.width(), src.height(), |g| {
        let d = inv.apply_dir(&geo_to_dir(&g));
        src.sample(&dir_to_geo(&d), Interpolation::Bilinear)
    })
    .expect("dimensions come from a valid frame")
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use crate::partition::solve_layout;
    use crate::sphere_geometry::{angular_distance, fibonacci_sphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_scene(w: u32) -> EquirectImage {
        EquirectImage::from_fn(w, w / 2, |g| {
            let d = geo_to_dir(&g);
            let v = d.as_vector();
            [
                (128.0 + 80.0 * v.x) as u8,
                (128.0 + 80.0 * v.y) as u8,
                (128.0 + 80.0 * v.z) as u8,
            ]
        })
        .unwrap()
    }

    fn random_dir(rng: &mut impl Rng) -> Direction {
        Direction::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn rejects_non_equirect_dims() {
        assert!(EquirectImage::new(RgbImage::new(100, 100)).is_err());
        assert!(EquirectImage::new(RgbImage::new(0, 0)).is_err());
        assert!(EquirectImage::new(RgbImage::new(200, 100)).is_ok());
    }

    #[test]
    fn pixel_geo_bijection_at_centers() {
        let img = EquirectImage::new(RgbImage::new(64, 32)).unwrap();
        for row in 0..32 {
            for col in 0..64 {
                let (x, y) = img.geo_to_pixel(&img.pixel_to_geo(col, row));
                assert!((x - col as f64).abs() < 1e-9 && (y - row as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_source_gives_constant_tile() {
        let src = EquirectImage::new(RgbImage::from_pixel(128, 64, Rgb([12, 200, 77]))).unwrap();
        let v = rectify_partition(&src, &Direction::new(0.3, -0.2, 0.9).unwrap(), 74.0, 64).unwrap();
        assert!(v.image().pixels().all(|p| p.0 == [12, 200, 77]));
    }

    #[test]
    fn center_pixel_samples_center_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = random_dir(&mut rng);
            let mut img = RgbImage::new(720, 360);
            let src0 = EquirectImage::new(img.clone()).unwrap();
            let (x, y) = src0.geo_to_pixel(&dir_to_geo(&c));
            let col = (x.round() as i64).rem_euclid(720) as u32;
            let row = (y.round() as i64).clamp(0, 359) as u32;
            img.put_pixel(col, row, Rgb([255, 255, 255]));
            let src = EquirectImage::new(img).unwrap();
            // Nearest sampling at the exact pixel center direction.
            let center = geo_to_dir(&src.pixel_to_geo(col, row));
            let g = ViewGeometry::new(&center, 74.0, 33, 0).unwrap();
            let t = rectify_view(&src, g, Interpolation::Nearest).unwrap();
            assert_eq!(t.image().get_pixel(16, 16).0, [255, 255, 255]);
            let t = rectify_view(&src, g, Interpolation::Bilinear).unwrap();
            assert_eq!(t.image().get_pixel(16, 16).0, [255, 255, 255]);
            assert!(angular_distance(&g.pixel_ray(16.0, 16.0), &center) < 1e-12);
        }
    }

    #[test]
    fn wide_fov_rejected() {
        let src = smooth_scene(64);
        assert!(matches!(rectify_partition(&src, &Direction::AXIS, 180.0, 32), Err(Error::FovTooWide { .. })));
        assert!(matches!(rectify_partition(&src, &Direction::AXIS, 200.0, 32), Err(Error::FovTooWide { .. })));
        assert!(rectify_partition(&src, &Direction::AXIS, 90.0, 8).is_err());
        let one = PartitionLayout::new(vec![Direction::AXIS], 360.0, 0).unwrap();
        assert!(matches!(rectify_all(&src, &one, 32), Err(Error::FovTooWide { .. })));
    }

    #[test]
    fn direction_to_pixel_cases() {
        let g = ViewGeometry::new(&Direction::new(0.2, 0.5, -0.3).unwrap(), 74.0, 512, 3).unwrap();
        let k = g.intrinsics();
        let (u, v) = g.direction_to_pixel(&g.center()).unwrap();
        assert!((u - k.cx).abs() < 1e-9 && (v - k.cy).abs() < 1e-9);
        assert!(g.direction_to_pixel(&g.center().neg()).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let (u, v) = (rng.gen_range(-0.5..511.5), rng.gen_range(-0.5..511.5));
            let d = g.pixel_ray(u, v);
            let (u2, v2) = g.direction_to_pixel(&d).unwrap();
            worst = worst.max((u - u2).hypot(v - v2));
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn intrinsics_follow_fov() {
        let k = PinholeIntrinsics::for_tile(512, 90.0);
        assert!((k.focal - 256.0).abs() < 1e-9);
        assert_eq!((k.cx, k.cy), (255.5, 255.5));
    }

    #[test]
    fn tile_up_is_north() {
        // Tile on the equator: the row above the center looks further north.
        let g = ViewGeometry::new(&Direction::AXIS, 60.0, 64, 0).unwrap();
        assert!(g.pixel_ray(31.5, 0.0).z() > 0.1);
        assert!(g.pixel_ray(63.0, 31.5).y() < -0.1, "right is -y when looking along +x");
    }

    #[test]
    fn layout_frusta_cover_the_sphere() {
        let layout = solve_layout(12, 3, &Default::default()).unwrap();
        let views = layout_views(&layout, 256).unwrap();
        for d in fibonacci_sphere(100_000) {
            assert!(views.iter().any(|v| v.direction_to_pixel(&d).is_some()));
        }
    }

    #[test]
    fn rectify_all_orders_views() {
        let layout = solve_layout(6, 1, &Default::default()).unwrap();
        let src = smooth_scene(256);
        let views = rectify_all(&src, &layout, 32).unwrap();
        assert_eq!(views.len(), 6);
        for (i, v) in views.iter().enumerate() {
            assert_eq!(v.partition_index(), i);
            assert_eq!(v.fov_deg(), layout.theta_deg());
            assert!(angular_distance(&v.geometry().center(), &layout.centers()[i]) < 1e-12);
        }
    }

    #[test]
    fn pixel_parallel_purity() {
        let src = smooth_scene(512);
        let g = ViewGeometry::new(&Direction::new(-0.4, 0.1, 0.7).unwrap(), 74.0, 128, 0).unwrap();
        let t = rectify_view(&src, g, Interpolation::Bilinear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let (u, v) = (rng.gen_range(0..128), rng.gen_range(0..128));
            assert_eq!(t.image().get_pixel(u, v).0, rectified_pixel(&src, &g, u, v, Interpolation::Bilinear));
        }
    }

    #[test]
    fn pole_rays_stay_in_bounds() {
        let src = smooth_scene(64);
        for c in [Direction::NORTH, Direction::NORTH.neg()] {
            let t = rectify_partition(&src, &c, 120.0, 33).unwrap();
            assert_eq!(t.side(), 33);
        }
        let g = GeoCoord::new(std::f64::consts::FRAC_PI_2, 0.0);
        let _ = src.sample(&g, Interpolation::Bilinear);
        let g = GeoCoord::new(-std::f64::consts::FRAC_PI_2, 3.0);
        let _ = src.sample(&g, Interpolation::Nearest);
    }

    #[test]
    fn rotation_equivariance_on_smooth_scene() {
        let src = smooth_scene(1024);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..4 {
            let q = Rotation::from_axis_angle(&random_dir(&mut rng).into_vector(), rng.gen_range(0.2..3.0));
            let rotated = rotate_equirect(&src, &q);
            let c = random_dir(&mut rng);
            let base = ViewGeometry::new(&c, 74.0, 96, 0).unwrap();
            let moved = ViewGeometry::with_orientation(q.compose(&base.orientation), 74.0, 96, 0).unwrap();
            let a = rectify_view(&src, base, Interpolation::Bilinear).unwrap();
            let b = rectify_view(&rotated, moved, Interpolation::Bilinear).unwrap();
            let diff: f64 = a
                .image()
                .as_raw()
                .iter()
                .zip(b.image().as_raw())
                .map(|(x, y)| (*x as f64 - *y as f64).abs())
                .sum::<f64>()
                / a.image().as_raw().len() as f64;
            assert!(diff < 2.0, "mean abs diff {diff}");
        }
        // Yaw about north keeps the north-up roll, so the public center API suffices.
        let q = Rotation::from_axis_angle(&Vector3::z(), 1.1);
        let rotated = rotate_equirect(&src, &q);
        let c = Direction::new(0.5, 0.2, 0.3).unwrap();
        let a = rectify_partition(&src, &c, 74.0, 96).unwrap();
        let b = rectify_partition(&rotated, &q.apply_dir(&c), 74.0, 96).unwrap();
        let diff: f64 = a.image().as_raw().iter().zip(b.image().as_raw()).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum::<f64>()
            / a.image().as_raw().len() as f64;
        assert!(diff < 2.0, "{diff}");
    }

    #[test]
    fn ppm_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let src = smooth_scene(64);
        let p = dir.path().join("f.ppm");
        src.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6\n64 32\n255\n"));
        let back = EquirectImage::load(&p).unwrap();
        assert_eq!(back, src);
        back.save(&dir.path().join("g.ppm")).unwrap();
        assert_eq!(std::fs::read(dir.path().join("g.ppm")).unwrap(), bytes);
        let png = dir.path().join("f.png");
        src.save(&png).unwrap();
        assert_eq!(EquirectImage::load(&png).unwrap(), src);
    }

    proptest::proptest! {
        #[test]
        fn pixel_ray_inverts_projection(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            fov in 20.0f64..170.0, u in 0.0f64..1.0, v in 0.0f64..1.0,
        ) {
            proptest::prop_assume!(x * x + y * y + z * z > 1e-3);
            let g = ViewGeometry::new(&Direction::new(x, y, z).unwrap(), fov, 257, 0).unwrap();
            let (pu, pv) = (u * 256.0, v * 256.0);
            let ray = g.pixel_ray(pu, pv);
            let (qu, qv) = g.direction_to_pixel(&ray).unwrap();
            proptest::prop_assert!((qu - pu).abs() < 1e-6 && (qv - pv).abs() < 1e-6, "{pu},{pv} -> {qu},{qv}");
        }
    }
}
