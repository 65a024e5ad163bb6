use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::strategy::Strategy;
use crate::agent::AgentIndex;
use crate::attestation::VerifierMode;
use crate::estimation::{GridCase, SeSettings};
use crate::trust::StepKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario config: {0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// When a run ends before its sample budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Run until every SE sample has been taken.
    #[default]
    Samples,
    /// Stop once at least half as many honest observers as there are agents
    /// hold the correct zero/non-zero trust pattern.
    Identification,
    /// Stop once every malicious agent is evicted.
    MaliciousEvicted,
}

fn default_window() -> u64 {
    40
}
fn default_samples() -> usize {
    40
}
fn default_interval() -> u64 {
    60
}
fn default_image_len() -> usize {
    256
}
fn default_true() -> bool {
    true
}

/// One scenario. Agents appear as 1-based labels in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub n_agents: usize,
    #[serde(default)]
    pub malicious: Vec<AgentIndex>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub step_rule: StepKind,
    #[serde(default = "default_window")]
    pub window_ticks: u64,
    #[serde(default)]
    pub verifier_mode: VerifierMode,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Ticks between consecutive SE samples.
    #[serde(default = "default_interval")]
    pub sample_interval: u64,
    /// Sample index at which the malicious agents turn; before it they
    /// behave honestly.
    #[serde(default)]
    pub compromise_at_sample: usize,
    /// Built-in case name (`case5`, `case118`) or path to a case file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default)]
    pub se: SeSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stop: StopRule,
    /// Hard tick limit; defaults to the sample budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ticks: Option<u64>,
    #[serde(default = "default_image_len")]
    pub image_len: usize,
    #[serde(default = "default_true")]
    pub record_trust: bool,
}

impl ScenarioConfig {
    pub fn new(n_agents: usize, malicious: Vec<AgentIndex>) -> Self {
        Self {
            name: String::new(),
            n_agents,
            malicious,
            strategy: Strategy::default(),
            step_rule: StepKind::default(),
            window_ticks: default_window(),
            verifier_mode: VerifierMode::default(),
            n_samples: default_samples(),
            sample_interval: default_interval(),
            compromise_at_sample: 0,
            grid: None,
            se: SeSettings::default(),
            seed: 0,
            stop: StopRule::default(),
            max_ticks: None,
            image_len: default_image_len(),
            record_trust: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_agents < 2 {
            return Err(ConfigError::new("n_agents must be at least 2"));
        }
        let mut seen = HashSet::new();
        for a in &self.malicious {
            if a.0 >= self.n_agents {
                return Err(ConfigError::new(format!(
                    "malicious agent {a} outside 1..={}",
                    self.n_agents
                )));
            }
            if !seen.insert(*a) {
                return Err(ConfigError::new(format!("malicious agent {a} listed twice")));
            }
        }
        if self.malicious.len() >= self.n_agents {
            return Err(ConfigError::new("at least one agent must be honest"));
        }
        if self.window_ticks == 0 || self.sample_interval == 0 {
            return Err(ConfigError::new("window_ticks and sample_interval must be positive"));
        }
        if self.image_len == 0 {
            return Err(ConfigError::new("image_len must be positive"));
        }
        if self.stop != StopRule::Samples && self.max_ticks.is_none() && self.n_samples == 0 {
            return Err(ConfigError::new("an early-stop run needs max_ticks or n_samples"));
        }
        let se = &self.se;
        if !(se.sigma > 0.0 && se.process_noise >= 0.0 && se.prior_variance > 0.0 && se.bias.is_finite()) {
            return Err(ConfigError::new(
                "se needs sigma > 0, process_noise >= 0, prior_variance > 0",
            ));
        }
        Ok(())
    }

    /// `m < N/2 - 1`, the population the protocol is built for.
    pub fn within_nominal_bound(&self) -> bool {
        2 * self.malicious.len() + 2 < self.n_agents
    }

    pub fn end_tick(&self) -> u64 {
        self.max_ticks
            .unwrap_or(self.n_samples as u64 * self.sample_interval)
    }

    /// Loads the configured case, resolving relative paths against the
    /// working directory.
    pub fn load_grid(&self) -> Result<Option<GridCase>, ConfigError> {
        self.load_grid_from(Path::new("."))
    }

    /// The case must map exactly this config's agents.
    pub fn check_grid(&self, case: &GridCase) -> Result<(), ConfigError> {
        let agents = case.agent_list();
        if agents.len() != self.n_agents || agents.iter().any(|a| a.0 >= self.n_agents) {
            return Err(ConfigError::new(format!(
                "grid case {} maps {} agents, config has {}",
                case.name,
                agents.len(),
                self.n_agents
            )));
        }
        Ok(())
    }

    pub fn load_grid_from(&self, base: &Path) -> Result<Option<GridCase>, ConfigError> {
        let Some(name) = &self.grid else {
            return Ok(None);
        };
        if let Some(case) = GridCase::builtin(name) {
            return Ok(Some(case));
        }
        let path = base.join(name);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ConfigError::new(format!("grid {}: {e}", path.display())))?;
        GridCase::from_json(&text)
            .map(Some)
            .map_err(|e| ConfigError::new(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_fills_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"n_agents": 5, "malicious": [3]}"#).unwrap();
        assert_eq!(cfg.malicious, vec![AgentIndex(2)]);
        assert_eq!(cfg.window_ticks, 40);
        assert_eq!(cfg, ScenarioConfig::new(5, vec![AgentIndex(2)]));
    }

    #[test]
    fn round_trip() {
        let mut cfg = ScenarioConfig::new(7, vec![AgentIndex(0), AgentIndex(6)]);
        cfg.grid = Some("case5".into());
        cfg.strategy = Strategy::Cooperative;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"n_agents": 1}"#,
            r#"{"n_agents": 5, "malicious": [6]}"#,
            r#"{"n_agents": 5, "malicious": [0]}"#,
            r#"{"n_agents": 5, "malicious": [2, 2]}"#,
            r#"{"n_agents": 2, "malicious": [1, 2]}"#,
            r#"{"n_agents": 5, "window_ticks": 0}"#,
            r#"{"n_agents": 5, "typo": 1}"#,
        ] {
            assert!(ScenarioConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn nominal_bound() {
        assert!(ScenarioConfig::new(5, vec![AgentIndex(0)]).within_nominal_bound());
        assert!(!ScenarioConfig::new(5, vec![AgentIndex(0), AgentIndex(1)]).within_nominal_bound());
        assert!(!ScenarioConfig::new(4, vec![AgentIndex(0)]).within_nominal_bound());
    }
}
