//! Run configuration: defaults, optional TOML config file, flag overrides.
//!
//! Precedence is defaults < config file < command-line flags. Every command
//! that writes outputs also writes the fully resolved configuration beside
//! them, so a run can be reproduced from its output directory alone.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{SplitSpec, WindowSpec};
use crate::map::{FitConfig, GridSpec};
use crate::predictor::{PredictionMode, PredictorParams};
use crate::swgmm::EmParams;
use crate::traj::PlanarVector;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "CLIFFMAP_OUT_DIR";

/// Resolved parameters for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Grid cell edge, dataset units.
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Sampling radius; defaults to the grid resolution when absent.
    pub sampling_radius: Option<f64>,
    /// Kernel parameter.
    pub beta: f64,
    /// Observed steps per instance (O_p).
    pub observed_steps: usize,
    /// Predicted steps per instance (T_p).
    pub horizon_steps: usize,
    /// Samples per instance (K).
    pub samples: usize,
    pub mode: PredictionMode,
    pub train_ratio: f64,
    /// Train ratios for the data-efficiency sweep.
    pub sweep_ratios: Vec<f64>,
    pub iterations: usize,
    pub base_seed: u64,
    /// Minimum observations per populated cell.
    pub n_min: usize,
    /// Largest mixture size tried per cell.
    pub j_max: usize,
    /// Window stride.
    pub stride: usize,
    /// Monte-Carlo draws per cell for KL export.
    pub kl_samples: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            origin_x: 0.0,
            origin_y: 0.0,
            sampling_radius: None,
            beta: 5.0,
            observed_steps: 8,
            horizon_steps: 12,
            samples: 1,
            mode: PredictionMode::MostLikely,
            train_ratio: 0.9,
            sweep_ratios: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            iterations: 10,
            base_seed: 0,
            n_min: 10,
            j_max: 5,
            stride: 1,
            kl_samples: 2000,
            output_dir: std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("resolution", self.resolution),
            ("beta", self.beta),
            (
                "sampling_radius",
                self.sampling_radius.unwrap_or(self.resolution),
            ),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.observed_steps == 0
            || self.horizon_steps == 0
            || self.samples == 0
            || self.iterations == 0
            || self.stride == 0
            || self.j_max == 0
            || self.kl_samples == 0
        {
            return Err(Error::Config(
                "step counts, samples, iterations, stride, j_max and kl_samples must be >= 1"
                    .into(),
            ));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        for &p in &self.sweep_ratios {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!(
                    "sweep ratio must lie in (0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Effective sampling radius: explicit value or the grid resolution.
    pub fn effective_sampling_radius(&self) -> f64 {
        self.sampling_radius.unwrap_or(self.resolution)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.resolution,
            PlanarVector::new(self.origin_x, self.origin_y),
        )
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            n_min: self.n_min,
            j_max: self.j_max,
            seed: self.base_seed,
            em: EmParams::default(),
        }
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            o_p: self.observed_steps,
            t_p: self.horizon_steps,
            stride: self.stride,
        }
    }

    pub fn predictor(&self, dt: f64) -> Result<PredictorParams> {
        PredictorParams::new(
            self.beta,
            self.effective_sampling_radius(),
            dt,
            self.horizon_steps,
            self.samples,
            self.mode,
        )
    }

    pub fn split(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_ratio, self.iterations, self.base_seed)
    }

    /// Writes the resolved configuration beside the run outputs.
    pub fn save_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("run-config.toml");
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
