use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere_geometry::{angular_distance, dir_to_geo, geo_to_dir, Direction, GeoCoord};

/// `N` cap centers and the covering "diameter" angle θ.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLayout {
    centers: Vec<Direction>,
    theta_deg: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    n: usize,
    theta_deg: f64,
    seed: u64,
    centers: Vec<CenterEntry>,
}

#[derive(Serialize, Deserialize)]
struct CenterEntry {
    lat_deg: f64,
    lon_deg: f64,
}

impl PartitionLayout {
    pub fn new(centers: Vec<Direction>, theta_deg: f64, seed: u64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument("layout has no centers".into()));
        }
        if !(theta_deg > 0.0 && theta_deg <= 360.0) {
            return Err(Error::InvalidArgument(format!("theta {theta_deg} outside (0, 360]")));
        }
        Ok(PartitionLayout { centers, theta_deg, seed })
    }

    pub fn n(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Direction] {
        &self.centers
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the nearest center (lowest index on ties).
    pub fn nearest_center(&self, d: &Direction) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let a = angular_distance(c, d);
            if a < best.1 {
                best = (i, a);
            }
        }
        best.0
    }

    pub fn to_json(&self) -> String {
        let file = LayoutFile {
            n: self.n(),
            theta_deg: round_sig9(self.theta_deg),
            seed: self.seed,
            centers: self
                .centers
                .iter()
                .map(|c| {
                    let g = dir_to_geo(c);
                    CenterEntry { lat_deg: round_sig9(g.lat_deg()), lon_deg: round_sig9(g.lon_deg()) }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: LayoutFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.n != file.centers.len() {
            return Err(format!("n = {} but {} centers listed", file.n, file.centers.len()));
        }
        let centers = file
            .centers
            .iter()
            .map(|c| geo_to_dir(&GeoCoord::from_degrees(c.lat_deg, c.lon_deg)))
            .collect();
        PartitionLayout::new(centers, file.theta_deg, file.seed).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::format(path, m))
    }
}

/// Rounds to 9 significant decimal digits.
pub(crate) fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}
