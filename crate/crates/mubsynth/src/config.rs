//! Strict TOML run configuration.
//!
//! Unknown keys are rejected outright: a typo in a long optimization run's
//! config should fail at parse time, not silently fall back to a default.

use serde::Deserialize;
use std::path::Path;

use crate::{IoLayerError, Result};
use mubsynth_core::cascade::DeviceSpec;
use mubsynth_core::optimize::{GradientMode, OptimizerConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// Truncation size `S` (number of retained time-bin modes).
    pub modes: usize,
    /// Unit-cell count `N`.
    pub cells: usize,
    /// Qudit dimension `d`.
    pub dim: usize,
    /// First output bin of the computational window.
    #[serde(default)]
    pub output_offset: usize,
    /// Drop the `S >= 4 d` truncation guard (small-S experiments only).
    #[serde(default)]
    pub relax_truncation_guard: bool,
}

impl DeviceSection {
    pub fn to_spec(&self) -> Result<DeviceSpec> {
        let spec = if self.relax_truncation_guard {
            DeviceSpec::new_relaxed(self.modes, self.cells, self.dim, self.output_offset)
        } else {
            DeviceSpec::new(self.modes, self.cells, self.dim, self.output_offset)
        };
        spec.map_err(|e| IoLayerError::Config(e.to_string()))
    }
}

fn default_fd_step() -> f64 {
    1e-5
}

fn default_max_iterations() -> u64 {
    15_000
}

fn default_restarts() -> u32 {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_restarts")]
    pub restarts: u32,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    /// "analytic" (default) or "finite-difference".
    #[serde(default)]
    pub gradient_mode: GradientModeName,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Stop the whole search once a restart reaches this error (0 disables).
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Fabrication chip budget: penalize FBG impulse-response power outside
    /// this many bins on either side of chip 0.
    #[serde(default)]
    pub chip_halfwidth: Option<usize>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            restarts: default_restarts(),
            max_iterations: default_max_iterations(),
            gradient_mode: GradientModeName::default(),
            fd_step: default_fd_step(),
            tolerance: 0.0,
            rng_seed: 0,
            chip_halfwidth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GradientModeName {
    #[default]
    Analytic,
    FiniteDifference,
}

impl From<GradientModeName> for GradientMode {
    fn from(name: GradientModeName) -> Self {
        match name {
            GradientModeName::Analytic => GradientMode::Analytic,
            GradientModeName::FiniteDifference => GradientMode::FiniteDifference,
        }
    }
}

/// Top-level config for `mubsynth optimize`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRunConfig {
    pub device: DeviceSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

impl OptimizeRunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IoLayerError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: OptimizeRunConfig =
            toml::from_str(text).map_err(|e| IoLayerError::Config(e.to_string()))?;
        // surface invalid numerics at parse time as well
        config.device.to_spec()?;
        config
            .optimizer_config()
            .validate()
            .map_err(|e| IoLayerError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            restarts: self.optimizer.restarts,
            max_iterations: self.optimizer.max_iterations,
            gradient_mode: self.optimizer.gradient_mode.into(),
            fd_step: self.optimizer.fd_step,
            tolerance: self.optimizer.tolerance,
            rng_seed: self.optimizer.rng_seed,
            chip_halfwidth: self.optimizer.chip_halfwidth,
        }
    }
}
