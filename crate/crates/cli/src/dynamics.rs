//! Fixed-point, ODE and stochastic checks for one honesty labeling.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trustgrid::dynamics::{
    classify_settlement, drift, integrate, nominal_bound, stochastic_run, HonestyLabeling,
    Settlement, StochasticConfig, Trajectory, TrustState,
};
use trustgrid::trust::StepKind;
use trustgrid::AgentIndex;

use crate::error::CliError;
use crate::output::{self, Format, OutDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    #[default]
    AllOnes,
    /// The inverted point `q` pulled `near_q_offset` into the cube.
    NearQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticSettings {
    pub runs: usize,
    pub max_iterations: u64,
    pub step: StepKind,
    pub seed: u64,
    /// Distance to `p*` that counts as tracking.
    pub tolerance: f64,
    /// Share of runs that must track `p*`.
    pub required_fraction: f64,
}

impl Default for StochasticSettings {
    fn default() -> Self {
        Self {
            runs: 100,
            max_iterations: 1_000_000,
            step: StepKind::Diminishing,
            seed: 0,
            tolerance: 1e-3,
            required_fraction: 0.95,
        }
    }
}

fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    200.0
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_record_every() -> usize {
    100
}
fn default_offset() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub name: String,
    pub n_agents: usize,
    /// 1-based labels of the honest agents.
    pub honest: Vec<AgentIndex>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub start: Start,
    #[serde(default = "default_offset")]
    pub near_q_offset: f64,
    /// Distance to a fixed point that counts as settled.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Integration steps between recorded trajectory points.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub stochastic: StochasticSettings,
}

impl DynamicsConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(CliError::config)?;
        cfg.labeling()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(CliError::config("dt must lie in (0, 1)"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::config("horizon must be positive"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.record_every == 0 {
            return Err(CliError::config("tolerance and record_every must be positive"));
        }
        if !(self.near_q_offset >= 0.0 && self.near_q_offset < 0.5) {
            return Err(CliError::config("near_q_offset must lie in [0, 0.5)"));
        }
        let s = &self.stochastic;
        if !(s.tolerance > 0.0 && (0.0..=1.0).contains(&s.required_fraction)) {
            return Err(CliError::config(
                "stochastic tolerance must be positive and required_fraction in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn labeling(&self) -> Result<HonestyLabeling, CliError> {
        let mut honest = vec![false; self.n_agents];
        for a in &self.honest {
            let slot = honest
                .get_mut(a.0)
                .ok_or_else(|| CliError::config(format!("honest agent {a} outside 1..={}", self.n_agents)))?;
            if *slot {
                return Err(CliError::config(format!("honest agent {a} listed twice")));
            }
            *slot = true;
        }
        if self.n_agents < 2 {
            return Err(CliError::config("n_agents must be at least 2"));
        }
        HonestyLabeling::new(honest).map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StochasticSummary {
    pub runs: usize,
    pub within_tolerance: usize,
    pub fraction: f64,
    pub mean_distance_to_p_star: f64,
    pub mean_iterations: f64,
    /// Distance between the ODE endpoint and `p*`, for comparison.
    pub ode_distance_to_p_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsReport {
    pub name: String,
    pub n_agents: usize,
    pub honest: Vec<AgentIndex>,
    pub malicious_count: usize,
    pub within_nominal_bound: bool,
    pub threshold_violation: bool,
    pub start: Start,
    pub drift_residual_p_star: f64,
    pub drift_residual_q: f64,
    pub settlement: Settlement,
    pub expected_settlement: Option<Settlement>,
    pub distance_to_p_star: f64,
    pub distance_to_q: f64,
    pub stochastic: Option<StochasticSummary>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    time: f64,
    observer: AgentIndex,
    subject: AgentIndex,
    value: f64,
}

fn start_state(cfg: &DynamicsConfig, lab: &HonestyLabeling) -> TrustState<f64> {
    match cfg.start {
        Start::AllOnes => TrustState::all_ones(lab),
        Start::NearQ => {
            let q = TrustState::<f64>::q_point(lab);
            let d = cfg.near_q_offset;
            TrustState::from_fn(lab, |i, j| {
                if i == j {
                    1.0
                } else {
                    (q.get(i, j) - d).abs()
                }
            })
        }
    }
}

fn stochastic_summary(cfg: &DynamicsConfig, lab: &HonestyLabeling, ode_distance: f64) -> Option<StochasticSummary> {
    let s = &cfg.stochastic;
    if s.runs == 0 || cfg.start != Start::AllOnes {
        return None;
    }
    let sc = StochasticConfig {
        max_iterations: s.max_iterations,
        step: s.step,
        ..StochasticConfig::default()
    };
    let mut within = 0;
    let mut dist = 0.0;
    let mut iters = 0.0;
    for run in 0..s.runs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(run));
        let r = stochastic_run(lab, &sc, &mut rng);
        if r.distance_to_p_star <= s.tolerance {
            within += 1;
        }
        dist += r.distance_to_p_star;
        iters += r.iterations as f64;
    }
    let n = s.runs as f64;
    Some(StochasticSummary {
        runs: s.runs,
        within_tolerance: within,
        fraction: within as f64 / n,
        mean_distance_to_p_star: dist / n,
        mean_iterations: iters / n,
        ode_distance_to_p_star: ode_distance,
    })
}

pub fn evaluate(cfg: &DynamicsConfig) -> Result<(DynamicsReport, Trajectory<f64>), CliError> {
    let lab = cfg.labeling()?;
    let residual = |p: &TrustState<f64>| drift(p, &lab).map(|h| h.max_abs()).map_err(CliError::config);
    let res_p = residual(&TrustState::p_star(&lab))?;
    let res_q = residual(&TrustState::q_point(&lab))?;

    let traj = integrate(&start_state(cfg, &lab), &lab, cfg.horizon, cfg.dt, cfg.record_every)
        .map_err(CliError::config)?;
    let settlement = classify_settlement(&traj, &lab, cfg.tolerance).map_err(|e| CliError::Abort(e.to_string()))?;
    let last = traj.last().expect("non-empty trajectory");
    let distance_to_p_star = last.distance(&TrustState::p_star(&lab));
    let distance_to_q = last.distance(&TrustState::q_point(&lab));

    let nominal = nominal_bound(lab.n(), lab.malicious_count());
    let expected = match cfg.start {
        Start::AllOnes if nominal => Some(Settlement::CorrectIdentification),
        // with a single malicious agent every state with zero honest trust
        // is an equilibrium, so q has no basin of its own
        Start::NearQ if lab.malicious_count() >= 2 => Some(Settlement::Inverted),
        _ => None,
    };
    let stochastic = stochastic_summary(cfg, &lab, distance_to_p_star);

    let mut checks = vec![CheckResult {
        name: "fixed points".into(),
        pass: res_p == 0.0 && res_q == 0.0,
        detail: format!("max |h(p*)| = {res_p:e}, max |h(q)| = {res_q:e}"),
    }];
    if let Some(want) = expected {
        checks.push(CheckResult {
            name: "ode settlement".into(),
            pass: settlement == want,
            detail: format!("settled {settlement:?}, expected {want:?}"),
        });
    }
    if let Some(s) = stochastic.as_ref().filter(|_| nominal) {
        checks.push(CheckResult {
            name: "stochastic tracking".into(),
            pass: s.fraction >= cfg.stochastic.required_fraction,
            detail: format!("{}/{} runs within {:e} of p*", s.within_tolerance, s.runs, cfg.stochastic.tolerance),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok((
        DynamicsReport {
            name: cfg.name.clone(),
            n_agents: cfg.n_agents,
            honest: lab.honest_agents().into_iter().map(AgentIndex).collect(),
            malicious_count: lab.malicious_count(),
            within_nominal_bound: nominal,
            threshold_violation: !nominal,
            start: cfg.start,
            drift_residual_p_star: res_p,
            drift_residual_q: res_q,
            settlement,
            expected_settlement: expected,
            distance_to_p_star,
            distance_to_q,
            stochastic,
            checks,
            pass,
        },
        traj,
    ))
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<DynamicsConfig, CliError> {
    let mut cfg = DynamicsConfig::from_json(&output::read_config(path)?)?;
    if let Some(seed) = seed {
        cfg.stochastic.seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_dynamics(config: &Path, seed: Option<u64>, out: &Path, format: Format) -> Result<DynamicsReport, CliError> {
    let cfg = load(config, seed)?;
    let dir = OutDir::create(out)?;
    let (report, traj) = evaluate(&cfg)?;
    let rows: Vec<TrajectoryRow> = traj
        .times
        .iter()
        .zip(&traj.states)
        .flat_map(|(t, s)| {
            s.entries()
                .filter(|(i, j, _)| i != j)
                .map(move |(i, j, value)| TrajectoryRow {
                    time: *t,
                    observer: AgentIndex(i),
                    subject: AgentIndex(j),
                    value,
                })
        })
        .collect();
    match format {
        Format::Csv => dir.csv("trajectory.csv", output::TRAJECTORY_HEADER, &rows)?,
        Format::Json => dir.json("trajectory.json", &rows)?,
    }
    dir.json("report.json", &report)?;

    if report.threshold_violation {
        println!(
            "threshold violated: {} malicious of {} agents (needs m < N/2 - 1)",
            report.malicious_count, report.n_agents
        );
    }
    println!(
        "settled: {:?} (distance to p* {:.3e}, to q {:.3e})",
        report.settlement, report.distance_to_p_star, report.distance_to_q
    );
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(report)
}
