use serde::{Deserialize, Serialize};

use super::{ScenarioConfig, ScenarioTrace};
use crate::agent::AgentIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentDetection {
    pub agent: AgentIndex,
    /// Eviction tick, if the agent was cast out.
    pub detection_tick: Option<u64>,
}

/// Detection summary of one trace, measured at honest observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub per_agent: Vec<AgentDetection>,
    pub attestations_at_identification: Option<usize>,
    pub min_honest_trust_over_time: Option<f64>,
    pub max_malicious_trust_over_time: Option<f64>,
    pub min_honest_trust_at_stop: Option<f64>,
    pub max_malicious_trust_at_stop: Option<f64>,
    /// Lowest honest trust strictly above highest malicious trust at the
    /// stop time. Vacuously true without malicious agents.
    pub separated: bool,
}

pub fn detection_metrics(trace: &ScenarioTrace, cfg: &ScenarioConfig) -> DetectionMetrics {
    let n = cfg.n_agents;
    let is_mal = |i: usize| cfg.malicious.contains(&AgentIndex(i));
    let per_agent = cfg
        .malicious
        .iter()
        .map(|&agent| AgentDetection {
            agent,
            detection_tick: trace.evicted(agent).map(|e| e.tick),
        })
        .collect();

    let mut min_honest: Option<f64> = None;
    let mut max_mal: Option<f64> = None;
    for i in (0..n).filter(|&i| !is_mal(i)) {
        for j in (0..n).filter(|&j| j != i) {
            let p = trace.final_trust[i][j];
            if is_mal(j) {
                max_mal = Some(max_mal.map_or(p, |m| m.max(p)));
            } else {
                min_honest = Some(min_honest.map_or(p, |m| m.min(p)));
            }
        }
    }
    let separated = match (min_honest, max_mal) {
        (Some(h), Some(m)) => h > m,
        _ => true,
    };
    let has_mal = !cfg.malicious.is_empty();
    DetectionMetrics {
        per_agent,
        attestations_at_identification: trace.attestations_at_identification.filter(|_| has_mal),
        min_honest_trust_over_time: min_honest.map(|_| trace.min_honest_trust),
        max_malicious_trust_over_time: has_mal.then_some(trace.max_malicious_trust),
        min_honest_trust_at_stop: min_honest,
        max_malicious_trust_at_stop: max_mal,
        separated,
    }
}
