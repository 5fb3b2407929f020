//! TOML configuration: an experiment description plus the attack matrix
//! (which pairs, methods, and iteration budgets to run).

use std::path::Path;

use anyhow::{bail, Context};
use prnu_core::harness::{ExperimentConfig, SpoofMethod};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub experiment: ExperimentConfig,
    /// Source -> target pairs attacked by `experiment --kind spoof`.
    pub spoof_pairs: Vec<(String, String)>,
    /// Attack methods run for every pair.
    pub methods: Vec<SpoofMethod>,
    /// Iteration budgets for `experiment --kind iterations`.
    pub m_values: Vec<usize>,
    /// Pair used by the iteration study; defaults to the first spoof pair.
    pub iteration_pair: Option<(String, String)>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            experiment: ExperimentConfig::default(),
            spoof_pairs: Vec::new(),
            methods: vec![SpoofMethod::Proposed],
            m_values: vec![3000, 6000],
            iteration_pair: None,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: CliConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.experiment.validate()?;
        Ok(config)
    }

    pub fn iteration_pair(&self) -> anyhow::Result<(String, String)> {
        if let Some(pair) = &self.iteration_pair {
            return Ok(pair.clone());
        }
        match self.spoof_pairs.first() {
            Some(pair) => Ok(pair.clone()),
            None => bail!("config has neither iteration_pair nor spoof_pairs"),
        }
    }
}
