//! Every tunable constant in one TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducial::codec::{DICTIONARY_SEED, DICTIONARY_SIZE, MIN_DISTANCE};
use crate::fiducial::{BodyModel, DetectorConfig};
use crate::partition::{CostWeights, PixelCostForm, SolverConfig};
use crate::rectifier::Interpolation;
use crate::sim::{ExperimentConfig, GeometricDetectorModel, RealtimeModel};
use crate::tracker::{Algo, TrackerConfig};

/// The shipped defaults, verbatim.
pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub solver: SolverConfig,
    pub selection: SelectionConfig,
    pub coverage: CoverageOracle,
    pub rectifier: RectifierConfig,
    pub codec: CodecConfig,
    pub detector: DetectorConfig,
    pub body: BodyConfig,
    pub tracker: TrackerConfig,
    pub geometric: GeometricDetectorModel,
    pub realtime: RealtimeModel,
    pub experiment: ExperimentSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub candidates: Vec<usize>,
    pub sweep_min: usize,
    pub sweep_max: usize,
    /// Source frame used for pixel counting.
    pub height: usize,
    pub width: usize,
    pub weights: CostWeights,
    pub pixel_form: PixelCostForm,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            candidates: vec![6, 12, 24],
            sweep_min: 4,
            sweep_max: 30,
            height: 960,
            width: 480,
            weights: CostWeights::default(),
            pixel_form: PixelCostForm::Inverted,
        }
    }
}

/// Sampling check that a layout's caps cover the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageOracle {
    pub samples: usize,
    pub slack_deg: f64,
}

impl Default for CoverageOracle {
    fn default() -> Self {
        CoverageOracle { samples: 100_000, slack_deg: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifierConfig {
    pub tile_side: u32,
    pub interpolation: Interpolation,
}

impl Default for RectifierConfig {
    fn default() -> Self {
        RectifierConfig { tile_side: 512, interpolation: Interpolation::Bilinear }
    }
}

/// The marker dictionary is compiled in; these must match it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub ids: usize,
    pub min_distance: u32,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { ids: DICTIONARY_SIZE, min_distance: MIN_DISTANCE, seed: DICTIONARY_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyConfig {
    pub face_edge: f64,
    pub marker_side: f64,
    /// Load this body file instead of the built-in solid.
    pub file: Option<String>,
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig { face_edge: 0.07, marker_side: 0.05, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub src_height: u32,
    pub supersample: u32,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub trajectory: String,
    pub algo: Algo,
    pub detector: crate::sim::DetectorKind,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            src_height: 480,
            supersample: 2,
            rate_hz: 30.0,
            duration_s: 20.0,
            trajectory: "close".into(),
            algo: Algo::Optimized,
            detector: crate::sim::DetectorKind::Geometric,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let c: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|m| Error::format(path, m))
    }

    /// Defaults, or the file when given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.selection.weights.validate()?;
        if self.codec != CodecConfig::default() {
            return Err(Error::Config(format!("codec settings are fixed at {:?}", CodecConfig::default())));
        }
        let s = &self.selection;
        if s.candidates.is_empty() || s.sweep_min < 1 || s.sweep_min > s.sweep_max || s.height == 0 || s.width == 0 {
            return Err(Error::Config(format!("selection settings out of range: {s:?}")));
        }
        if self.rectifier.tile_side < crate::rectifier::MIN_TILE_SIDE {
            return Err(Error::Config(format!("tile side {} below {}", self.rectifier.tile_side, crate::rectifier::MIN_TILE_SIDE)));
        }
        if self.tracker.budget == Some(0) {
            return Err(Error::Config("tracker budget must be at least 1".into()));
        }
        if !(self.experiment.rate_hz > 0.0 && self.experiment.duration_s >= 0.0) {
            return Err(Error::Config("experiment rate must be positive and duration non-negative".into()));
        }
        self.experiment_config().validate()
    }

    pub fn body(&self) -> Result<BodyModel> {
        match &self.body.file {
            Some(f) => BodyModel::load(Path::new(f)),
            None => BodyModel::rhombicuboctahedron(self.body.face_edge, self.body.marker_side),
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            src_height: self.experiment.src_height,
            tile_side: self.rectifier.tile_side,
            algo: self.experiment.algo,
            detector: self.experiment.detector,
            tracker: self.tracker,
            geometric: self.geometric,
            detection: self.detector.clone(),
            realtime: self.realtime,
            supersample: self.experiment.supersample,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_equals_defaults() {
        assert_eq!(Config::from_toml(DEFAULT_TOML).unwrap(), Config::default());
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn partial_override_and_rejections() {
        let c = Config::from_toml("[tracker]\nbudget = 4\n[solver]\nrestarts = 2\n").unwrap();
        assert_eq!(c.tracker.budget, Some(4));
        assert_eq!(c.solver.restarts, 2);
        assert_eq!(c.solver.eta, 0.05);
        assert!(Config::from_toml("[tracker]\nbudget = 0\n").is_err());
        assert!(Config::from_toml("[codec]\nids = 100\n").is_err());
        assert!(Config::from_toml("[solver]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[selection.weights]\ncount = 0.1\npixels = 0.5\ndistortion = 0.4\n").is_err());
    }

    #[test]
    fn default_body_is_the_nine_face_solid() {
        let b = Config::default().body().unwrap();
        assert_eq!(b.markers.len(), 9);
        assert_eq!(b.marker_side, 0.05);
    }
}
