//! TOML configuration for the whole harness. Every section is optional.

use std::path::{Path, PathBuf};

use carvebot_contact::synth::CorpusSpec;
use carvebot_core::calib::CalibrationParams;
use carvebot_core::control::{ControllerConfig, PlantModel};
use carvebot_core::planner::{CutMotionProfile, PlannerConfig};
use carvebot_core::workspace::SafeRegion;
use carvebot_core::Point2;
use serde::{Deserialize, Serialize};

use crate::metrics::{Bands, TrimMode};
use crate::scene::{Board, MeatSpec};

/// Ground-truth camera mounting and the simulated marker survey used to
/// fit it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSetup {
    pub theta0: f64,
    /// Meters per pixel along each camera axis.
    pub scale: (f64, f64),
    pub offset: (f64, f64),
    pub n_markers: usize,
    /// Standard deviation of the robot-side marker measurement, meters.
    pub marker_noise_m: f64,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        Self { theta0: 0.05, scale: (0.001, 0.001), offset: (-0.3, 0.15), n_markers: 12, marker_noise_m: 2e-4 }
    }
}

impl CalibrationSetup {
    pub fn truth(&self) -> CalibrationParams {
        CalibrationParams::new(self.theta0, self.scale.0, self.scale.1, Point2::new(self.offset.0, self.offset.1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_slices: usize,
    pub trim_mode: TrimMode,
    /// SQUISH-E bound for trim paths, pixels.
    pub squish_bound_px: f64,
    pub cube_side_cm: f64,
    /// How far past the interface ends the proctor puts its markers.
    pub proctor_offset_cm: f64,
    /// Relative amplitude of the random harmonics on chop faces.
    pub chop_harmonic_amplitude: f64,
    /// Slices whose fat, spread over their thickness, is thinner than this
    /// get a chop face without a band.
    pub min_fat_thickness_cm: f64,
    pub bands: Bands,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_slices: 9,
            trim_mode: TrimMode::Trim,
            squish_bound_px: 1.0,
            cube_side_cm: 3.0,
            proctor_offset_cm: 0.5,
            chop_harmonic_amplitude: 0.03,
            min_fat_thickness_cm: 0.2,
            bands: Bands::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub addr: String,
    pub runs_dir: PathBuf,
    /// Scene the interactive session starts from.
    pub chop: MeatSpec,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { addr: "127.0.0.1:8080".into(), runs_dir: PathBuf::from("runs"), chop: MeatSpec::chop() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactSetup {
    pub corpus: CorpusSpec,
    pub n_trees: usize,
    pub seed: u64,
}

impl Default for ContactSetup {
    fn default() -> Self {
        Self { corpus: CorpusSpec::default(), n_trees: 500, seed: 7 }
    }
}

fn default_region() -> SafeRegion {
    SafeRegion { x_min: 0.25, x_max: 0.75, y_min: -0.25, y_max: 0.25, z_min: 0.0, z_max: 0.3 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub board: Board,
    pub loin: MeatSpec,
    pub calibration: CalibrationSetup,
    #[serde(default = "default_region")]
    pub safety: SafeRegion,
    pub planner: PlannerConfig,
    pub motion: CutMotionProfile,
    pub control: ControllerConfig,
    pub plant: PlantModel,
    pub pipeline: PipelineConfig,
    pub service: ServiceConfig,
    pub contact: ContactSetup,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            board: Board::default(),
            loin: MeatSpec::loin(),
            calibration: CalibrationSetup::default(),
            safety: default_region(),
            planner: PlannerConfig::default(),
            motion: CutMotionProfile::default(),
            control: ControllerConfig::default(),
            plant: PlantModel::default(),
            pipeline: PipelineConfig::default(),
            service: ServiceConfig::default(),
            contact: ContactSetup::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing config: {0}")]
    Write(#[from] toml::ser::Error),
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }
}
