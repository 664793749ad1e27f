//! Run configuration for the command-line tool.
//!
//! The config file is flat `key = value` TOML:
//!
//! ```toml
//! beta_mw = 400.0
//! day_ahead_minutes = 60
//! balancing_minutes = 15
//! alpha_tildes = [0.0, 0.25, 0.5, 0.75, 1.0]
//! modes = ["no_impact", "price_impact"]
//! horizon_start = "2024-01-01T00:00:00Z"
//! horizon_end = "2024-07-01T00:00:00Z"
//! parallelism = 4
//! ```
//!
//! Every key is optional. Command-line flags override file values; missing
//! capacity and resolutions fall back to the dataset metadata.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backtest::{SweepConfig, DEFAULT_ALPHA_TILDES};
use crate::error::{Error, Result};
use crate::io::BundleMetadata;
use crate::market_model::MarketResolution;
use crate::settlement::ImpactMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beta_mw: Option<f64>,
    pub day_ahead_minutes: Option<u32>,
    pub balancing_minutes: Option<u32>,
    pub alpha_tildes: Option<Vec<f64>>,
    pub modes: Option<Vec<ImpactMode>>,
    pub horizon_start: Option<DateTime<Utc>>,
    pub horizon_end: Option<DateTime<Utc>>,
    pub data_dir: Option<String>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Layers `overrides` on top of `self`; set fields in `overrides` win.
    pub fn merged(self, overrides: RunConfig) -> RunConfig {
        RunConfig {
            beta_mw: overrides.beta_mw.or(self.beta_mw),
            day_ahead_minutes: overrides.day_ahead_minutes.or(self.day_ahead_minutes),
            balancing_minutes: overrides.balancing_minutes.or(self.balancing_minutes),
            alpha_tildes: overrides.alpha_tildes.or(self.alpha_tildes),
            modes: overrides.modes.or(self.modes),
            horizon_start: overrides.horizon_start.or(self.horizon_start),
            horizon_end: overrides.horizon_end.or(self.horizon_end),
            data_dir: overrides.data_dir.or(self.data_dir),
            seed: overrides.seed.or(self.seed),
            parallelism: overrides.parallelism.or(self.parallelism),
        }
    }

    /// Fills the remaining gaps from dataset metadata and defaults.
    pub fn resolve(&self, metadata: &BundleMetadata) -> Result<SweepConfig> {
        let resolution = MarketResolution::new(
            self.day_ahead_minutes.unwrap_or(metadata.day_ahead_minutes),
            self.balancing_minutes.unwrap_or(metadata.balancing_minutes),
        )?;
        let horizon = match (self.horizon_start, self.horizon_end) {
            (None, None) => None,
            (start, end) => {
                let start = start.unwrap_or(DateTime::<Utc>::MIN_UTC);
                let end = end.unwrap_or(DateTime::<Utc>::MAX_UTC);
                if end <= start {
                    return Err(Error::Config("horizon_end must be after horizon_start".into()));
                }
                Some((start, end))
            }
        };
        let sweep = SweepConfig {
            alpha_tildes: self
                .alpha_tildes
                .clone()
                .unwrap_or_else(|| DEFAULT_ALPHA_TILDES.to_vec()),
            beta_mw: self.beta_mw.unwrap_or(metadata.beta_mw),
            resolution,
            modes: self.modes.clone().unwrap_or_else(|| ImpactMode::ALL.to_vec()),
            horizon,
            parallelism: self.parallelism.unwrap_or(1),
        };
        sweep.validate()?;
        Ok(sweep)
    }
}
