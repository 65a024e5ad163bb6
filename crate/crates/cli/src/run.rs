use std::path::Path;

use serde::Serialize;
use trustgrid::sim::{
    detection_metrics, run_with_grid, AgentDetection, Eviction, ScenarioConfig, ScenarioOutcome,
    ScenarioTrace, StopReason, Strategy,
};
use trustgrid::AgentIndex;

use crate::error::CliError;
use crate::output::{self, Format, OutDir};

/// Compact result of one scenario, written as `summary.json`.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub n_agents: usize,
    pub malicious: Vec<AgentIndex>,
    pub strategy: Strategy,
    pub grid: Option<String>,
    pub hash_algorithm: String,
    pub outcome: ScenarioOutcome,
    pub stop: StopReason,
    pub end_tick: u64,
    pub compromise_tick: u64,
    pub attestations: usize,
    pub elections: usize,
    pub evictions: Vec<Eviction>,
    pub detections: Vec<AgentDetection>,
    pub identification_tick: Option<u64>,
    pub attestations_at_identification: Option<usize>,
    pub separated: bool,
    pub min_honest_trust_at_stop: Option<f64>,
    pub max_malicious_trust_at_stop: Option<f64>,
    pub se_samples: usize,
    pub skipped_samples: Vec<usize>,
    pub final_squared_error: Option<f64>,
    pub final_max_abs_error: Option<f64>,
}

impl RunSummary {
    pub fn new(trace: &ScenarioTrace) -> Self {
        let cfg = &trace.config;
        let m = detection_metrics(trace, cfg);
        let last = trace.se_errors.last();
        Self {
            name: cfg.name.clone(),
            seed: cfg.seed,
            n_agents: cfg.n_agents,
            malicious: cfg.malicious.clone(),
            strategy: cfg.strategy,
            grid: cfg.grid.clone(),
            hash_algorithm: trace.hash_algorithm.clone(),
            outcome: trace.outcome,
            stop: trace.stop,
            end_tick: trace.end_tick,
            compromise_tick: trace.compromise_tick,
            attestations: trace.reports.len(),
            elections: trace.elections.len(),
            evictions: trace.evictions.clone(),
            detections: m.per_agent,
            identification_tick: trace.identification_tick,
            attestations_at_identification: m.attestations_at_identification,
            separated: m.separated,
            min_honest_trust_at_stop: m.min_honest_trust_at_stop,
            max_malicious_trust_at_stop: m.max_malicious_trust_at_stop,
            se_samples: trace.se_errors.len(),
            skipped_samples: trace.skipped_samples.clone(),
            final_squared_error: last.map(|s| s.squared_error),
            final_max_abs_error: last.map(|s| s.max_abs_error),
        }
    }

    fn print(&self) {
        println!("outcome: {:?} (stopped: {:?} at tick {})", self.outcome, self.stop, self.end_tick);
        println!("attestations: {}, elections: {}", self.attestations, self.elections);
        for d in &self.detections {
            match d.detection_tick {
                Some(t) => println!("agent {} evicted at tick {t}", d.agent),
                None => println!("agent {} not evicted", d.agent),
            }
        }
        for e in self.evictions.iter().filter(|e| !self.malicious.contains(&e.agent)) {
            println!("honest agent {} evicted at tick {}", e.agent, e.tick);
        }
        if let (Some(sq), Some(mx)) = (self.final_squared_error, self.final_max_abs_error) {
            println!("final SE error: squared {sq:.6e}, max abs {mx:.6e}");
        }
    }
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::from_json(&output::read_config(path)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, format: Format) -> Result<(), CliError> {
    let cfg = load(config, seed)?;
    let grid = cfg.load_grid_from(output::config_dir(config))?;
    let dir = OutDir::create(out)?;
    let trace = run_with_grid(&cfg, grid)?;
    let summary = RunSummary::new(&trace);
    match format {
        Format::Csv => {
            dir.csv("trust.csv", output::TRUST_HEADER, &trace.trust)?;
            dir.csv("reports.csv", output::REPORTS_HEADER, &trace.reports)?;
            dir.csv("se_errors.csv", output::SE_ERRORS_HEADER, &trace.se_errors)?;
            dir.csv("evictions.csv", output::EVICTIONS_HEADER, &trace.evictions)?;
            dir.json("elections.json", &trace.elections)?;
        }
        Format::Json => dir.json("trace.json", &trace)?,
    }
    dir.json("summary.json", &summary)?;
    summary.print();
    Ok(())
}
