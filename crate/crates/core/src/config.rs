// SPDX-License-Identifier: Apache-2.0

//! Pipeline configuration, read from TOML. Every field has a default, so
//! an empty file yields the stock 180 × 64 grid, 18-bit formats and the
//! 0.05 m top-view map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{QFormat, RoundingMode};
use crate::hw::DEFAULT_CLOCK_HZ;
use crate::postprocess::{GridMapConfig, DEFAULT_THRESHOLD};
use crate::spherical::GridConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub gridmap: GridMapConfig,
    pub weights: QFormat,
    pub activations: QFormat,
    pub rounding: RoundingMode,
    pub threshold: f32,
    pub clock_mhz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            gridmap: GridMapConfig::default(),
            weights: QFormat::WEIGHTS_18,
            activations: QFormat::ACTIVATIONS_18,
            rounding: RoundingMode::default(),
            threshold: DEFAULT_THRESHOLD,
            clock_mhz: DEFAULT_CLOCK_HZ / 1e6,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.gridmap.validate()?;
        for q in [self.weights, self.activations] {
            QFormat::new(q.total_bits, q.fraction_bits)?;
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.clock_mhz > 0.0) {
            return Err(Error::Config("clock must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.grid.cols(), 180);
        assert_eq!(cfg.grid.rows, 64);
    }

    #[test]
    fn overrides_and_round_trip() {
        let cfg = PipelineConfig::from_toml(
            "threshold = 0.6\n[grid]\nazimuth_bin = 2.5\nrows = 16\n[weights]\ntotal_bits = 12\nfraction_bits = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.cols(), 36);
        assert_eq!(cfg.weights, QFormat::new(12, 8).unwrap());
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in ["threshold = 2.0", "[weights]\ntotal_bits = 1\nfraction_bits = 0", "bogus = 1", "[grid]\nazimuth_bin = 0.7"] {
            assert!(matches!(PipelineConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }
}
