//! PMU state estimation: grid cases, the linear measurement model and a
//! Kalman filter that only consumes rows from currently trusted agents.

pub mod grid;
pub mod kalman;
pub mod measurement;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentIndex;

pub use grid::{build_admittance, GridCase};
pub use kalman::{kalman_step, kalman_step_with, max_abs_error, squared_error, KalmanState, UpdateForm};
pub use measurement::{build_measurement_matrix, synthesize, MeasurementModel, MeasurementSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimationError {
    #[error("invalid grid case: {0}")]
    InvalidCase(String),
    #[error("agent {0} owns no bus in this case")]
    InvalidAgent(AgentIndex),
    #[error("no trusted agent is left to report measurements")]
    CannotEstimate,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is singular")]
    Singular,
}

/// Noise model and filter tuning shared by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeSettings {
    /// PMU noise standard deviation per real component (pu).
    pub sigma: f64,
    /// Process noise variance per state component.
    pub process_noise: f64,
    /// Initial covariance scale after a (re)start.
    pub prior_variance: f64,
    /// Offset a malicious agent adds to its voltage readings (pu).
    pub bias: f64,
}

impl Default for SeSettings {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            process_noise: 1e-6,
            prior_variance: 1e6,
            bias: 0.1,
        }
    }
}

/// Error figures for one filter step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeSample {
    pub sample: usize,
    pub squared_error: f64,
    pub max_abs_error: f64,
    pub reporting: usize,
}

/// Running filter over a case. Every sample is synthesized for all agents
/// and archived; the filter consumes only the trusted agents' row blocks, so
/// the noise realisation does not depend on who is trusted.
#[derive(Debug, Clone)]
pub struct Estimator {
    case: GridCase,
    settings: SeSettings,
    state: KalmanState<f64>,
    q: DMatrix<f64>,
    full: MeasurementModel<f64>,
    history: Vec<MeasurementSet<f64>>,
    selection: Option<(Vec<AgentIndex>, Vec<usize>, DMatrix<f64>)>,
}

impl Estimator {
    pub fn new(case: GridCase, settings: SeSettings) -> Self {
        let n = case.state_dim();
        let state = Self::initial_state(&case, &settings);
        let full = build_measurement_matrix(&case, &case.agent_list())
            .expect("validated cases map every agent to a bus");
        Self {
            q: DMatrix::identity(n, n) * settings.process_noise,
            case,
            settings,
            state,
            full,
            history: Vec::new(),
            selection: None,
        }
    }

    fn initial_state(case: &GridCase, settings: &SeSettings) -> KalmanState<f64> {
        // flat start: 1 + j0 at every bus
        let x = DVector::from_fn(case.state_dim(), |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
        KalmanState::diffuse(x, settings.prior_variance)
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn state(&self) -> &KalmanState<f64> {
        &self.state
    }

    /// Drops the filter state and restarts from the flat prior. The
    /// measurement archive is kept.
    pub fn reset(&mut self) {
        self.state = Self::initial_state(&self.case, &self.settings);
    }

    fn select(&mut self, trusted: &[AgentIndex]) -> Result<(), EstimationError> {
        if trusted.is_empty() {
            return Err(EstimationError::CannotEstimate);
        }
        if matches!(&self.selection, Some((set, _, _)) if set.as_slice() == trusted) {
            return Ok(());
        }
        let mut rows = Vec::new();
        for &agent in trusted {
            let block = self
                .full
                .block_of(agent)
                .ok_or(EstimationError::InvalidAgent(agent))?;
            rows.extend(block.start..block.start + block.len);
        }
        let h = self.full.h.select_rows(rows.iter());
        self.selection = Some((trusted.to_vec(), rows, h));
        Ok(())
    }

    fn filter(&mut self, meas: &MeasurementSet<f64>) -> Result<(), EstimationError> {
        let (_, rows, h) = self.selection.as_ref().expect("selection made before filtering");
        let sub = MeasurementSet {
            z: meas.z.select_rows(rows.iter()),
            r_diag: meas.r_diag.select_rows(rows.iter()),
        };
        self.state = kalman_step(&self.state, &sub, h, &self.q)?.state;
        Ok(())
    }

    /// One filter step against `truth` with rows from `trusted` only. Agents
    /// in `biased` skew their voltage readings.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        sample: usize,
        truth: &DVector<f64>,
        trusted: &[AgentIndex],
        biased: &[AgentIndex],
        rng: &mut R,
    ) -> Result<SeSample, EstimationError> {
        let meas = synthesize(&self.full, truth, self.settings.sigma, biased, self.settings.bias, rng);
        self.history.push(meas.clone());
        self.select(trusted)?;
        self.filter(&meas)?;
        Ok(SeSample {
            sample,
            squared_error: squared_error(&self.state.x, truth),
            max_abs_error: max_abs_error(&self.state.x, truth),
            reporting: trusted.len(),
        })
    }

    /// Re-runs the filter from the flat prior over every archived sample,
    /// keeping only rows from `trusted`.
    pub fn refilter(&mut self, trusted: &[AgentIndex]) -> Result<(), EstimationError> {
        self.reset();
        self.select(trusted)?;
        let history = std::mem::take(&mut self.history);
        let result = history.iter().try_for_each(|m| self.filter(m));
        self.history = history;
        result
    }
}

/// Runs `samples` filter steps over the case's true-state sequence with a
/// fixed trusted set.
pub fn run_se<R: Rng + ?Sized>(
    case: &GridCase,
    trusted: &[AgentIndex],
    biased: &[AgentIndex],
    samples: usize,
    settings: SeSettings,
    rng: &mut R,
) -> Result<Vec<SeSample>, EstimationError> {
    let truths = case.true_states(samples);
    let mut est = Estimator::new(case.clone(), settings);
    truths
        .iter()
        .enumerate()
        .map(|(s, x)| est.step(s, x, trusted, biased, rng))
        .collect()
}
