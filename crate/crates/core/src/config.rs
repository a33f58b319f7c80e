//! Run configuration: one human-readable TOML document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::AdaptiveParams;
use crate::losses::LossConfig;
use crate::model::BackboneConfig;
use crate::smoothing::L0Params;

/// Every knob of a run. CLI flags override file values; the resolved
/// document is echoed into the output directory for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub backbone: BackboneConfig,
    pub loss: LossConfig,
    /// Conservative Canny thresholds (low, high) on the 0–255 gradient
    /// scale; divided by 255 at the detector boundary.
    pub canny_high: (f64, f64),
    /// Permissive (over-detecting) Canny thresholds, same scale.
    pub canny_low: (f64, f64),
    pub l0: L0Params,
    pub adaptive: AdaptiveParams,
    /// Gaussian pre-blur kernel size.
    pub blur_kernel: usize,
    /// Bilateral pre-blur: diameter and sigmas (color sigma on 0–255 scale).
    pub bilateral_diameter: usize,
    pub bilateral_sigma_color: f64,
    pub bilateral_sigma_space: f64,
    pub epochs_phase1: usize,
    pub epochs_per_round: usize,
    /// Stop when round-over-round edge growth falls below this percentage.
    pub termination_pct: f64,
    pub max_rounds: usize,
    pub seed: u64,
    /// Components smaller than this are removed from pseudo labels.
    pub min_component: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Worker threads; 0 means use available parallelism.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::new(),
            output_dir: PathBuf::new(),
            backbone: BackboneConfig::default(),
            loss: LossConfig::default(),
            canny_high: (200.0, 300.0),
            canny_low: (20.0, 40.0),
            l0: L0Params::default(),
            adaptive: AdaptiveParams::default(),
            blur_kernel: 5,
            bilateral_diameter: 15,
            bilateral_sigma_color: 50.0,
            bilateral_sigma_space: 50.0,
            epochs_phase1: 5,
            epochs_per_round: 5,
            termination_pct: 2.0,
            max_rounds: 10,
            seed: 42,
            min_component: 30,
            batch_size: 8,
            learning_rate: 1e-4,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let text =
            toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Canny thresholds converted to the internal [0, 1] gradient scale.
    pub fn canny_high_scaled(&self) -> (f64, f64) {
        (self.canny_high.0 / 255.0, self.canny_high.1 / 255.0)
    }

    pub fn canny_low_scaled(&self) -> (f64, f64) {
        (self.canny_low.0 / 255.0, self.canny_low.1 / 255.0)
    }

    pub fn bilateral_sigma_color_scaled(&self) -> f64 {
        self.bilateral_sigma_color / 255.0
    }

    /// Checks value ranges and cross-field invariants. `require_dataset`
    /// additionally demands that the dataset directory exists.
    pub fn validate(&self, require_dataset: bool) -> Result<()> {
        self.backbone.validate()?;
        self.loss.validate()?;
        self.l0.validate()?;
        if self.loss.delta.len() != self.backbone.num_blocks {
            return Err(Error::Config(format!(
                "loss.delta has length {} but backbone.num_blocks is {}",
                self.loss.delta.len(),
                self.backbone.num_blocks
            )));
        }
        let check_pair = |name: &str, (low, high): (f64, f64)| {
            if !(0.0 <= low && low <= high) {
                return Err(Error::Config(format!(
                    "{name} thresholds ({low}, {high}) must satisfy 0 <= low <= high"
                )));
            }
            Ok(())
        };
        check_pair("canny_high", self.canny_high)?;
        check_pair("canny_low", self.canny_low)?;
        if self.blur_kernel % 2 == 0 || self.blur_kernel == 0 {
            return Err(Error::Config(format!(
                "blur_kernel {} must be odd",
                self.blur_kernel
            )));
        }
        if self.bilateral_diameter % 2 == 0 || self.bilateral_diameter == 0 {
            return Err(Error::Config(format!(
                "bilateral_diameter {} must be odd",
                self.bilateral_diameter
            )));
        }
        if !(self.termination_pct >= 0.0) {
            return Err(Error::Config("termination_pct must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if require_dataset && !self.dataset_dir.is_dir() {
            return Err(Error::Config(format!(
                "dataset_dir {} does not exist",
                self.dataset_dir.display()
            )));
        }
        Ok(())
    }
}
