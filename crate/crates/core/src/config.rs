//! Scenario configuration files.
//!
//! A scenario is one TOML document with a section per module. Every section
//! has defaults matching the desk-scale preset, and unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocation::{TradeoffMode, LOCAL_FIRST_FACTOR};
use crate::beamforming::ScaOptions;
use crate::environment::EnvironmentConfig;
use crate::error::{Error, Result};
use crate::experiments::{SchemeName, SweepSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachingConfig {
    pub user_count: usize,
    /// Cache size as a fraction of the state count, `M / S`.
    pub cache_fraction: f64,
    /// Cache size `M` in files; overrides `cache_fraction` when set.
    pub total_memory: Option<f64>,
    /// Gain threshold for the phantom schedule; defaults to `round(K M / S)`.
    pub t_target: Option<usize>,
    pub local_first_factor: f64,
    /// Trade-off used by the `allocate` command.
    pub tradeoff: TradeoffChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeoffChoice {
    MulticastAware,
    LocalFirst,
}

impl Default for CachingConfig {
    fn default() -> Self {
        Self {
            user_count: 4,
            cache_fraction: 0.33,
            total_memory: None,
            t_target: None,
            local_first_factor: LOCAL_FIRST_FACTOR,
            tradeoff: TradeoffChoice::MulticastAware,
        }
    }
}

impl CachingConfig {
    pub fn total_memory(&self, state_count: usize) -> f64 {
        self.total_memory.unwrap_or(self.cache_fraction * state_count as f64)
    }

    pub fn t_target(&self, state_count: usize) -> usize {
        self.t_target.unwrap_or_else(|| {
            (self.user_count as f64 * self.total_memory(state_count) / state_count as f64).round() as usize
        })
    }

    pub fn tradeoff_mode(&self, choice: TradeoffChoice) -> TradeoffMode {
        match choice {
            TradeoffChoice::MulticastAware => TradeoffMode::MulticastAware,
            TradeoffChoice::LocalFirst => TradeoffMode::LocalFirst { factor: self.local_first_factor },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateMapConfig {
    /// Rates given inline; bypasses estimation.
    pub rates: Option<Vec<f64>>,
    /// CSV file with `state_index,rate` rows; bypasses estimation.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub drops: usize,
    pub schemes: Vec<SchemeName>,
    pub sweep: Option<SweepSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { seed: 1, drops: 200, schemes: SchemeName::MAIN.to_vec(), sweep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub environment: EnvironmentConfig,
    pub caching: CachingConfig,
    pub beamforming: ScaOptions,
    pub rate_map: RateMapConfig,
    pub experiment: ExperimentConfig,
}

impl ScenarioConfig {
    /// Full-scale preset: 30 m x 30 m room, 32 antennas, six users, 500 drops.
    pub fn full_scale() -> Self {
        let mut cfg = Self { environment: EnvironmentConfig::full_scale(), ..Self::default() };
        cfg.caching.user_count = 6;
        cfg.experiment.drops = 500;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative rate-map paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.rate_map.file, path.parent()) {
            if file.is_relative() {
                cfg.rate_map.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        let c = &self.caching;
        if c.user_count == 0 {
            return Err(Error::Config("user_count must be at least 1".into()));
        }
        if !(c.cache_fraction > 0.0 && c.cache_fraction <= 1.0) {
            return Err(Error::Config(format!("cache_fraction must lie in (0, 1], got {}", c.cache_fraction)));
        }
        if let Some(m) = c.total_memory {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("total_memory must be positive, got {m}")));
            }
        }
        if !(c.local_first_factor > 0.0 && c.local_first_factor.is_finite()) {
            return Err(Error::Config("local_first_factor must be positive".into()));
        }
        let b = &self.beamforming;
        if b.max_iters == 0 || !(b.tol > 0.0) || !(b.inner_tol > 0.0) {
            return Err(Error::Config("beamforming max_iters, tol and inner_tol must be positive".into()));
        }
        if self.rate_map.rates.is_some() && self.rate_map.file.is_some() {
            return Err(Error::Config("give rate_map.rates or rate_map.file, not both".into()));
        }
        if self.experiment.drops == 0 {
            return Err(Error::Config("experiment.drops must be at least 1".into()));
        }
        if self.experiment.schemes.is_empty() {
            return Err(Error::Config("experiment.schemes must not be empty".into()));
        }
        if let Some(sweep) = &self.experiment.sweep {
            sweep.validate()?;
        }
        Ok(())
    }

    pub fn alpha(&self) -> usize {
        self.environment.spatial_multiplexing_gain
    }

    /// Single-line JSON of the resolved configuration.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "{}".into())
    }

    /// Provenance line written at the top of every output file.
    pub fn provenance(&self) -> String {
        format!("ldcc {TOOL_VERSION} config={}", self.to_json_line())
    }
}
