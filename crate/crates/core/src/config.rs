//! Run configuration loaded from one TOML file.
//!
//! Every section and field is optional; missing values take the defaults
//! listed in [`DEFAULT_CONFIG_TOML`].

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, Strategy};
use crate::engine::{Dataset, GaConfig};
use crate::error::ConfigError;
use crate::evaluators::{SurrogateParams, WorkerSettings};
use crate::search_space::SearchSpace;

/// The default configuration, with every setting commented.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("default_config.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    #[default]
    Surrogate,
    External,
}

impl std::str::FromStr for EvaluatorKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surrogate" => Ok(EvaluatorKind::Surrogate),
            "external" => Ok(EvaluatorKind::External),
            other => Err(ConfigError::InvalidChoice { field: "evaluator", value: other.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerSection {
    pub command: String,
    pub dataset: String,
    pub timeout_secs: f64,
    pub pool_size: usize,
}

impl Default for WorkerSection {
    fn default() -> Self {
        let w = WorkerSettings::default();
        Self { command: w.command, dataset: w.dataset, timeout_secs: w.timeout_secs, pool_size: w.pool_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub budget_units: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { strategies: Strategy::ALL.to_vec(), seeds: (0..10).collect(), budget_units: 1500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub evaluator: EvaluatorKind,
    pub search_space: SearchSpace,
    pub ga: GaConfig,
    pub dataset: Dataset,
    pub surrogate: SurrogateParams<f64>,
    pub worker: WorkerSection,
    pub baselines: BaselineConfig,
    pub compare: CompareSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search_space.validate()?;
        self.ga.validate()?;
        self.baselines.validate()?;
        if self.dataset.num_classes == 0 || self.dataset.input_shape.channels == 0 {
            return Err(ConfigError::InvalidSetting { field: "dataset", reason: "empty input or no classes".into() });
        }
        if self.compare.budget_units.is_nan() || self.compare.budget_units <= 0.0 {
            return Err(ConfigError::InvalidSetting { field: "budget_units", reason: "must be positive".into() });
        }
        Ok(())
    }

    pub fn worker_settings(&self) -> WorkerSettings {
        WorkerSettings {
            command: self.worker.command.clone(),
            dataset: self.worker.dataset.clone(),
            input_shape: self.dataset.input_shape,
            num_classes: self.dataset.num_classes,
            timeout_secs: self.worker.timeout_secs,
            pool_size: self.worker.pool_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match_code_defaults() {
        assert_eq!(RunConfig::from_toml_str(DEFAULT_CONFIG_TOML).unwrap(), RunConfig::default());
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_and_errors() {
        let cfg = RunConfig::from_toml_str("evaluator = \"external\"\n[ga]\npopulation_size = 8\n").unwrap();
        assert_eq!(cfg.evaluator, EvaluatorKind::External);
        assert_eq!(cfg.ga.population_size, 8);
        assert_eq!(cfg.ga.generations_per_phase, 5);
        assert!(RunConfig::from_toml_str("[ga]\npopulation = 8\n").is_err());
        assert!(RunConfig::from_toml_str("[ga]\nmutation_rate = 2.0\n").is_err());
        assert!(RunConfig::from_toml_str("[search_space]\nfilter_sizes = []\n").is_err());
    }
}
