//! Batch runs over a grid of population sizes, malicious counts, strategies
//! and seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    detection_metrics, random_malicious_set, run_with_grid, ConfigError, ScenarioConfig,
    ScenarioOutcome, StopRule, Strategy,
};
use crate::attestation::VerifierMode;
use crate::trust::StepKind;

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::NonCooperative, Strategy::Cooperative]
}
fn default_stop() -> StopRule {
    StopRule::MaliciousEvicted
}
fn default_max_ticks() -> u64 {
    2_000_000
}
fn default_window() -> u64 {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: String,
    pub n_agents: Vec<usize>,
    pub malicious_counts: Vec<usize>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Number of seeds per cell, starting at `first_seed`.
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default = "default_stop")]
    pub stop: StopRule,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub step_rule: StepKind,
    #[serde(default)]
    pub verifier_mode: VerifierMode,
    #[serde(default = "default_window")]
    pub window_ticks: u64,
    /// Also run combinations with `m >= N/2 - 1`.
    #[serde(default)]
    pub include_stress: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cells().is_empty() {
            return Err(ConfigError::new("sweep grid is empty"));
        }
        Ok(())
    }

    /// Every scenario of the grid, in a fixed order.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &n in &self.n_agents {
            for &m in &self.malicious_counts {
                if n < 2 || m >= n || (!self.include_stress && 2 * m + 2 >= n) {
                    continue;
                }
                for &strategy in &self.strategies {
                    for seed in self.first_seed..self.first_seed + self.seeds {
                        let mut cfg = ScenarioConfig::new(n, random_malicious_set(n, m, seed));
                        cfg.name = format!("n{n}-m{m}-{strategy:?}-s{seed}");
                        cfg.strategy = strategy;
                        cfg.seed = seed;
                        cfg.stop = self.stop;
                        cfg.max_ticks = Some(self.max_ticks);
                        cfg.step_rule = self.step_rule;
                        cfg.verifier_mode = self.verifier_mode;
                        cfg.window_ticks = self.window_ticks;
                        cfg.record_trust = false;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_agents: usize,
    pub malicious_count: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub nominal: bool,
    pub outcome: Option<ScenarioOutcome>,
    pub honest_evictions: usize,
    pub malicious_evicted: usize,
    pub identification_tick: Option<u64>,
    pub attestations_at_identification: Option<usize>,
    pub attestations: usize,
    pub separated: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n_agents: usize,
    pub malicious_count: usize,
    pub strategy: Strategy,
    pub runs: usize,
    pub completed: usize,
    /// Evicted malicious agents over all malicious agents.
    pub detection_rate: f64,
    pub runs_with_honest_eviction: usize,
    pub separation_rate: f64,
    pub mean_attestations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellStats>,
}

fn run_cell(cfg: &ScenarioConfig) -> SweepRow {
    let mut row = SweepRow {
        n_agents: cfg.n_agents,
        malicious_count: cfg.malicious.len(),
        strategy: cfg.strategy,
        seed: cfg.seed,
        nominal: cfg.within_nominal_bound(),
        outcome: None,
        honest_evictions: 0,
        malicious_evicted: 0,
        identification_tick: None,
        attestations_at_identification: None,
        attestations: 0,
        separated: None,
        error: None,
    };
    match run_with_grid(cfg, None) {
        Ok(trace) => {
            let metrics = detection_metrics(&trace, cfg);
            row.outcome = Some(trace.outcome);
            row.honest_evictions = trace.honest_evictions();
            row.malicious_evicted = trace.evictions.len() - row.honest_evictions;
            row.identification_tick = trace.identification_tick;
            row.attestations_at_identification = trace.attestations_at_identification;
            row.attestations = trace.reports.len();
            row.separated = Some(metrics.separated);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every cell on a pool of `jobs` threads. Rows come back in grid
/// order whatever the thread count.
pub fn run_sweep(cfg: &SweepConfig, jobs: usize) -> Result<SweepSummary, ConfigError> {
    cfg.validate()?;
    let cells = cfg.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ConfigError::new(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(run_cell).collect());
    Ok(SweepSummary {
        cells: aggregate(&rows),
        rows,
    })
}

fn aggregate(rows: &[SweepRow]) -> Vec<CellStats> {
    let mut out: Vec<CellStats> = Vec::new();
    for chunk in rows.chunk_by(|a, b| {
        (a.n_agents, a.malicious_count, a.strategy) == (b.n_agents, b.malicious_count, b.strategy)
    }) {
        let first = &chunk[0];
        let done: Vec<&SweepRow> = chunk.iter().filter(|r| r.error.is_none()).collect();
        let total_mal = first.malicious_count * done.len();
        let evicted: usize = done.iter().map(|r| r.malicious_evicted).sum();
        let attest: Vec<f64> = done
            .iter()
            .filter_map(|r| r.attestations_at_identification.map(|a| a as f64))
            .collect();
        out.push(CellStats {
            n_agents: first.n_agents,
            malicious_count: first.malicious_count,
            strategy: first.strategy,
            runs: chunk.len(),
            completed: done.len(),
            detection_rate: if total_mal == 0 {
                1.0
            } else {
                evicted as f64 / total_mal as f64
            },
            runs_with_honest_eviction: done.iter().filter(|r| r.honest_evictions > 0).count(),
            separation_rate: if done.is_empty() {
                0.0
            } else {
                done.iter().filter(|r| r.separated == Some(true)).count() as f64 / done.len() as f64
            },
            mean_attestations: (!attest.is_empty())
                .then(|| attest.iter().sum::<f64>() / attest.len() as f64),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig::from_json(r#"{"n_agents": [5], "malicious_counts": [0, 1], "seeds": 3}"#).unwrap()
    }

    #[test]
    fn grid_skips_stress_cells_by_default() {
        let cfg = SweepConfig::from_json(r#"{"n_agents": [5], "malicious_counts": [1, 2], "seeds": 20}"#)
            .unwrap();
        assert_eq!(cfg.cells().len(), 40);
        let stress = SweepConfig {
            include_stress: true,
            ..cfg
        };
        assert_eq!(stress.cells().len(), 80);
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(SweepConfig::from_json(r#"{"n_agents": [], "malicious_counts": [1], "seeds": 2}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"n_agents": [5], "malicious_counts": [3], "seeds": 2}"#).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small();
        let a = run_sweep(&cfg, 1).unwrap();
        let b = run_sweep(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 12);
        assert_eq!(a.cells.len(), 4);
    }
}
