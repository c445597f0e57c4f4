//! Scenario configuration files.
//!
//! One flat TOML table per scenario. Keys mirror the scenario fields; any
//! key not listed here is an error.

use std::path::{Path, PathBuf};

use bbc_core::sim::{AdversaryMode, Scenario};
use serde::Deserialize;

use crate::{CliError, ExitStatus};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_infra: usize,
    pub road_length: f64,
    pub radio_range: f64,
    pub rounds: u64,
    pub latency_min: u64,
    pub latency_max: u64,
    pub adversary_mode: String,
    pub adversary_count: usize,
    pub inflate_by: u64,
    pub match_threshold: f64,
    pub activity_window: u64,
    pub drop_probability: f64,
    pub feature_dim: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Relative paths resolve against the config file's directory.
    pub out_dir: Option<PathBuf>,
    /// 0 silent, 1 summary, 2 summary plus round traces.
    pub verbosity: u8,
    pub golden: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            seed: s.seed,
            n_vehicles: s.n_vehicles,
            n_infra: s.n_infra,
            road_length: s.road_length,
            radio_range: s.radio_range,
            rounds: s.rounds,
            latency_min: s.latency_min,
            latency_max: s.latency_max,
            adversary_mode: s.adversary_mode.name().to_string(),
            adversary_count: s.adversary_count,
            inflate_by: s.inflate_by,
            match_threshold: s.match_threshold,
            activity_window: s.activity_window,
            drop_probability: s.drop_probability,
            feature_dim: s.feature_dim,
            speed_min: s.speed_min,
            speed_max: s.speed_max,
            out_dir: None,
            verbosity: 1,
            golden: None,
        }
    }
}

fn config_error(message: String) -> CliError {
    CliError::new(ExitStatus::Config, message)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_error(format!("config error: {}", e.to_string().trim_end())))
    }

    /// Reads a config and resolves `out_dir` and `golden` against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| config_error(format!("{}: {}", path.display(), e.message)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out_dir = cfg.out_dir.map(|p| base.join(p));
        cfg.golden = cfg.golden.map(|p| base.join(p));
        Ok(cfg)
    }

    /// The validated scenario; errors name the offending key.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let adversary_mode: AdversaryMode =
            self.adversary_mode.parse().map_err(|e| config_error(format!("invalid adversary_mode: {e}")))?;
        let s = Scenario {
            seed: self.seed,
            n_vehicles: self.n_vehicles,
            n_infra: self.n_infra,
            road_length: self.road_length,
            radio_range: self.radio_range,
            rounds: self.rounds,
            latency_min: self.latency_min,
            latency_max: self.latency_max,
            adversary_mode,
            adversary_count: self.adversary_count,
            inflate_by: self.inflate_by,
            match_threshold: self.match_threshold,
            activity_window: self.activity_window,
            drop_probability: self.drop_probability,
            feature_dim: self.feature_dim,
            speed_min: self.speed_min,
            speed_max: self.speed_max,
        };
        s.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(s)
    }
}
