//! Mean-field analysis of the trust dynamics.
//!
//! The state is the block of trust values held by honest observers about
//! every agent. Under uniformly random (verifier, attester) pairs and an
//! attestation primitive that reveals the true labeling, the expected
//! projected increment of entry `(i, j)` is
//!
//! ```text
//! h_ij = e_j (pH - pM) / (N (N - 1))      0 < p_ij < 1
//!      = -[e_j (pH - pM)]_- / (N (N - 1))  p_ij = 1
//!      =  [e_j (pH - pM)]_+ / (N (N - 1))  p_ij = 0
//! ```
//!
//! where `pH`/`pM` sum observer `i`'s trust in the honest/malicious agents
//! other than `i` and `j`. The honest-indicator state `p*` and its
//! complement `q` are both fixed points; which one the flow reaches depends
//! on the starting point and on how many agents are malicious.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentIndex;
use crate::attestation::Outcome;
use crate::scalar::Scalar;
use crate::trust::{StepKind, StepRule, TrustMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("labeling has no honest agent")]
    NoHonestAgent,
    #[error("agent {0} is not an honest observer")]
    NotHonest(usize),
    #[error("step {0} must lie in (0, 1)")]
    StepTooLarge(f64),
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("need at least one sample")]
    NoSamples,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("state shape does not match the labeling")]
    Shape,
}

/// Ground-truth split of the agents into honest (`e_j = +1`) and malicious
/// (`e_j = -1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestyLabeling {
    honest: Vec<bool>,
}

impl HonestyLabeling {
    pub fn new(honest: Vec<bool>) -> Result<Self, DynamicsError> {
        if !honest.iter().any(|h| *h) {
            return Err(DynamicsError::NoHonestAgent);
        }
        Ok(Self { honest })
    }

    pub fn with_malicious(n: usize, malicious: &[AgentIndex]) -> Result<Self, DynamicsError> {
        let mut honest = vec![true; n];
        for m in malicious {
            if let Some(h) = honest.get_mut(m.0) {
                *h = false;
            }
        }
        Self::new(honest)
    }

    /// The last `m` agents malicious.
    pub fn tail_malicious(n: usize, m: usize) -> Result<Self, DynamicsError> {
        Self::new((0..n).map(|j| j + m < n).collect())
    }

    pub fn n(&self) -> usize {
        self.honest.len()
    }

    pub fn is_honest(&self, j: usize) -> bool {
        self.honest[j]
    }

    pub fn sign<T: Scalar>(&self, j: usize) -> T {
        if self.honest[j] {
            T::one()
        } else {
            -T::one()
        }
    }

    pub fn honest_agents(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.honest[j]).collect()
    }

    pub fn honest_count(&self) -> usize {
        self.honest.iter().filter(|h| **h).count()
    }

    pub fn malicious_count(&self) -> usize {
        self.n() - self.honest_count()
    }

    /// `m < N/2 - 1`, equivalently `|H| > N/2 + 1`.
    pub fn within_nominal_bound(&self) -> bool {
        nominal_bound(self.n(), self.malicious_count())
    }
}

/// `m < n/2 - 1` in integer arithmetic.
pub fn nominal_bound(n: usize, m: usize) -> bool {
    2 * m + 2 < n
}

/// Values indexed by (honest observer, agent). Used both for trust states
/// and for the drift field evaluated on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMatrix<T> {
    observers: Vec<usize>,
    n: usize,
    data: Vec<T>,
}

pub type TrustState<T> = ObserverMatrix<T>;

impl<T: Scalar> ObserverMatrix<T> {
    /// Every off-diagonal entry set to `f(observer, subject)`, self-trust 1.
    pub fn from_fn(labeling: &HonestyLabeling, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let observers = labeling.honest_agents();
        let n = labeling.n();
        let mut data = Vec::with_capacity(observers.len() * n);
        for &i in &observers {
            for j in 0..n {
                data.push(if i == j { T::one() } else { f(i, j) });
            }
        }
        Self { observers, n, data }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            observers: other.observers.clone(),
            n: other.n,
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn all_ones(labeling: &HonestyLabeling) -> Self {
        Self::from_fn(labeling, |_, _| T::one())
    }

    /// Honest agents trusted, malicious agents distrusted.
    pub fn p_star(labeling: &HonestyLabeling) -> Self {
        Self::from_fn(labeling, |_, j| indicator(labeling.is_honest(j)))
    }

    /// The inverted labeling. Self-trust stays at 1.
    pub fn q_point(labeling: &HonestyLabeling) -> Self {
        Self::from_fn(labeling, |_, j| indicator(!labeling.is_honest(j)))
    }

    /// Honest rows of a full trust matrix.
    pub fn from_trust_matrix(m: &TrustMatrix<T>, labeling: &HonestyLabeling) -> Result<Self, DynamicsError> {
        if m.n() != labeling.n() {
            return Err(DynamicsError::Shape);
        }
        Ok(Self::from_fn(labeling, |i, j| m.get(i, j)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn observers(&self) -> &[usize] {
        &self.observers
    }

    fn row_of(&self, observer: usize) -> Option<usize> {
        self.observers.binary_search(&observer).ok()
    }

    pub fn get(&self, observer: usize, subject: usize) -> T {
        let r = self.row_of(observer).expect("honest observer");
        self.data[r * self.n + subject]
    }

    pub fn set(&mut self, observer: usize, subject: usize, v: T) {
        let r = self.row_of(observer).expect("honest observer");
        self.data[r * self.n + subject] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    /// `(observer, subject, value)` over all entries, diagonal included.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.observers.iter().enumerate().flat_map(move |(r, &i)| {
            (0..self.n).map(move |j| (i, j, self.data[r * self.n + j]))
        })
    }

    /// Max-norm distance over off-diagonal entries.
    pub fn distance(&self, other: &Self) -> T {
        self.entries()
            .zip(other.entries())
            .filter(|((i, j, _), _)| i != j)
            .map(|((_, _, a), (_, _, b))| (a - b).abs())
            .fold(T::zero(), |acc, d| acc.max_of(d))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max_of(v.abs()))
    }

    pub fn in_unit_cube(&self) -> bool {
        self.data.iter().all(|v| *v >= T::zero() && *v <= T::one())
    }

    pub fn to_f64(&self) -> ObserverMatrix<f64> {
        ObserverMatrix {
            observers: self.observers.clone(),
            n: self.n,
            data: self.data.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

fn indicator<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

fn check_shape<T: Scalar>(state: &TrustState<T>, labeling: &HonestyLabeling) -> Result<(), DynamicsError> {
    if state.n != labeling.n() || state.observers != labeling.honest_agents() {
        return Err(DynamicsError::Shape);
    }
    Ok(())
}

/// `(pH, pM)` for honest observer `i` and subject `j`.
pub fn partial_sums<T: Scalar>(
    state: &TrustState<T>,
    labeling: &HonestyLabeling,
    i: usize,
    j: usize,
) -> Result<(T, T), DynamicsError> {
    check_shape(state, labeling)?;
    if i >= labeling.n() || !labeling.is_honest(i) {
        return Err(DynamicsError::NotHonest(i));
    }
    let mut ph = T::zero();
    let mut pm = T::zero();
    for k in (0..labeling.n()).filter(|&k| k != i && k != j) {
        if labeling.is_honest(k) {
            ph += state.get(i, k);
        } else {
            pm += state.get(i, k);
        }
    }
    Ok((ph, pm))
}

/// The unprojected mean-field value `e_j (pH - pM) / (N (N - 1))` for every
/// entry, computed from per-row totals.
fn interior_field<T: Scalar>(state: &TrustState<T>, labeling: &HonestyLabeling, out: &mut TrustState<T>) {
    let n = state.n;
    let scale = T::one() / (T::from_count(n) * T::from_count(n - 1));
    for (r, &i) in state.observers.iter().enumerate() {
        let row = state.row(r);
        let mut total_h = T::zero();
        let mut total_m = T::zero();
        for (k, &v) in row.iter().enumerate() {
            if k == i {
                continue;
            }
            if labeling.is_honest(k) {
                total_h += v;
            } else {
                total_m += v;
            }
        }
        for j in 0..n {
            let idx = r * n + j;
            if j == i {
                out.data[idx] = T::zero();
                continue;
            }
            let (ph, pm) = if labeling.is_honest(j) {
                (total_h - row[j], total_m)
            } else {
                (total_h, total_m - row[j])
            };
            out.data[idx] = labeling.sign::<T>(j) * (ph - pm) * scale;
        }
    }
}

/// Drift field with the boundary branches applied on the cube's facets.
pub fn drift<T: Scalar>(state: &TrustState<T>, labeling: &HonestyLabeling) -> Result<TrustState<T>, DynamicsError> {
    check_shape(state, labeling)?;
    let mut h = TrustState::zeros_like(state);
    interior_field(state, labeling, &mut h);
    for (v, p) in h.data.iter_mut().zip(&state.data) {
        if *p == T::one() {
            *v = -v.negative_part();
        } else if *p == T::zero() {
            *v = v.positive_part();
        }
    }
    for (r, &i) in state.observers.iter().enumerate() {
        h.data[r * state.n + i] = T::zero();
    }
    Ok(h)
}

/// Sampled solution of the projected flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<TrustState<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> Option<&TrustState<T>> {
        self.states.last()
    }
}

/// Forward Euler with projection after every step:
/// `p <- clamp(p + dt * h_interior(p))`. Clamping reproduces the facet
/// branches of the drift. Records every `record_every` steps plus the end.
pub fn integrate<T: Scalar>(
    state0: &TrustState<T>,
    labeling: &HonestyLabeling,
    horizon: T,
    dt: T,
    record_every: usize,
) -> Result<Trajectory<T>, DynamicsError> {
    check_shape(state0, labeling)?;
    if dt <= T::zero() || dt >= T::one() {
        return Err(DynamicsError::StepTooLarge(dt.to_f64_lossy()));
    }
    if horizon <= T::zero() {
        return Err(DynamicsError::BadHorizon);
    }
    let steps = (horizon.to_f64_lossy() / dt.to_f64_lossy()).ceil() as usize;
    let record_every = record_every.max(1);
    let mut p = state0.clone();
    let mut field = TrustState::zeros_like(state0);
    let mut t = T::zero();
    let mut traj = Trajectory {
        times: vec![t],
        states: vec![p.clone()],
    };
    for step in 1..=steps {
        interior_field(&p, labeling, &mut field);
        for (v, h) in p.data.iter_mut().zip(&field.data) {
            *v = (*v + dt * *h).clamp_unit();
        }
        for (r, &i) in p.observers.iter().enumerate() {
            p.data[r * p.n + i] = T::one();
        }
        t += dt;
        if step % record_every == 0 || step == steps {
            traj.times.push(t);
            traj.states.push(p.clone());
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Settlement {
    CorrectIdentification,
    Inverted,
    Other,
}

pub fn classify_state<T: Scalar>(state: &TrustState<T>, labeling: &HonestyLabeling, tol: T) -> Settlement {
    if state.distance(&TrustState::p_star(labeling)) <= tol {
        Settlement::CorrectIdentification
    } else if state.distance(&TrustState::q_point(labeling)) <= tol {
        Settlement::Inverted
    } else {
        Settlement::Other
    }
}

pub fn classify_settlement<T: Scalar>(
    traj: &Trajectory<T>,
    labeling: &HonestyLabeling,
    tol: T,
) -> Result<Settlement, DynamicsError> {
    let last = traj.last().ok_or(DynamicsError::EmptyTrajectory)?;
    Ok(classify_state(last, labeling, tol))
}

/// Directional derivative of the unit-cube projection at `p` in direction `q`.
fn projected_direction<T: Scalar>(p: T, q: T) -> T {
    if (p == T::one() && q > T::zero()) || (p == T::zero() && q < T::zero()) {
        T::zero()
    } else {
        q
    }
}

/// Projected one-step direction seen by honest observer `i` about `j` when
/// `k` verifies `j` and reports the truth if honest, the opposite otherwise.
/// The observer's own verification is not counted, matching the drift.
fn pair_direction<T: Scalar>(
    state: &TrustState<T>,
    labeling: &HonestyLabeling,
    i: usize,
    k: usize,
    j: usize,
) -> T {
    if i == j || i == k {
        return T::zero();
    }
    let q = labeling.sign::<T>(k) * labeling.sign::<T>(j) * state.get(i, k);
    projected_direction(state.get(i, j), q)
}

/// Exact expectation of the projected one-step direction over all ordered
/// (verifier, attester) pairs.
pub fn mean_drift_exact<T: Scalar>(
    state: &TrustState<T>,
    labeling: &HonestyLabeling,
) -> Result<TrustState<T>, DynamicsError> {
    check_shape(state, labeling)?;
    let n = labeling.n();
    let weight = T::one() / (T::from_count(n) * T::from_count(n - 1));
    let mut out = TrustState::zeros_like(state);
    for k in 0..n {
        for j in (0..n).filter(|&j| j != k) {
            for &i in &state.observers {
                let d = pair_direction(state, labeling, i, k, j);
                if d != T::zero() {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + weight * d);
                }
            }
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of the mean projected direction with entrywise
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    pub mean: ObserverMatrix<f64>,
    pub std_err: ObserverMatrix<f64>,
    pub samples: usize,
}

pub fn mean_drift_check<T: Scalar, R: Rng + ?Sized>(
    state: &TrustState<T>,
    labeling: &HonestyLabeling,
    samples: usize,
    rng: &mut R,
) -> Result<DriftEstimate, DynamicsError> {
    check_shape(state, labeling)?;
    if samples == 0 {
        return Err(DynamicsError::NoSamples);
    }
    let n = labeling.n();
    let mut sum = ObserverMatrix::<f64>::zeros_like(&state.to_f64());
    let mut sum_sq = sum.clone();
    for _ in 0..samples {
        let k = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= k {
            j += 1;
        }
        for (r, &i) in state.observers.iter().enumerate() {
            let d = pair_direction(state, labeling, i, k, j).to_f64_lossy();
            if d != 0.0 {
                sum.data[r * n + j] += d;
                sum_sq.data[r * n + j] += d * d;
            }
        }
    }
    let s = samples as f64;
    let mut mean = sum.clone();
    let mut std_err = sum;
    for idx in 0..mean.data.len() {
        let m = mean.data[idx] / s;
        let var = (sum_sq.data[idx] / s - m * m).max(0.0);
        mean.data[idx] = m;
        std_err.data[idx] = (var / s).sqrt();
    }
    Ok(DriftEstimate {
        mean,
        std_err,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub max_iterations: u64,
    pub step: StepKind,
    /// Whether the verifier applies its own report to its own trust row, as
    /// every observer other than the attester does under the update rule.
    pub verifier_self_update: bool,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            step: StepKind::Diminishing,
            verifier_self_update: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRun {
    pub iterations: u64,
    pub final_state: TrustState<f64>,
    pub distance_to_p_star: f64,
    pub distance_to_q: f64,
}

/// Runs the report-driven trust iterates with uniformly random
/// (verifier, attester) pairs and idealized attestation, starting from full
/// trust. Stops at `max_iterations` or once `p*` is reached (it is
/// absorbing for these iterates).
pub fn stochastic_run<R: RngCore + ?Sized>(
    labeling: &HonestyLabeling,
    config: &StochasticConfig,
    rng: &mut R,
) -> StochasticRun {
    let n = labeling.n();
    let mut m = TrustMatrix::<f64>::new(n);
    let mut rule = StepRule::new(config.step, n);
    let target = TrustState::<f64>::p_star(labeling);
    let mut wrong: usize = target
        .entries()
        .filter(|(i, j, v)| i != j && m.get(*i, *j) != *v)
        .count();
    let honest = labeling.honest_agents();
    let mut iterations = 0;
    while iterations < config.max_iterations && wrong > 0 {
        let k = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= k {
            j += 1;
        }
        let outcome = Outcome::from_pass(labeling.is_honest(k) == labeling.is_honest(j));
        let report = crate::attestation::AttestationReport {
            tick: iterations,
            verifier: AgentIndex(k),
            attester: AgentIndex(j),
            outcome,
        };
        let want = indicator::<f64>(labeling.is_honest(j));
        let before: Vec<bool> = honest.iter().map(|&i| i != j && m.get(i, j) == want).collect();
        let step = rule.step::<f64>();
        m.apply_report_with(&report, step, |obs| {
            let i = obs.0;
            let counted = labeling.is_honest(i) && (config.verifier_self_update || i != k);
            counted.then_some(outcome)
        })
        .expect("pair is valid");
        rule.advance();
        for (idx, &i) in honest.iter().enumerate() {
            if i == j {
                continue;
            }
            let now = m.get(i, j) == want;
            match (before[idx], now) {
                (true, false) => wrong += 1,
                (false, true) => wrong -= 1,
                _ => {}
            }
        }
        iterations += 1;
    }
    let final_state = TrustState::from_trust_matrix(&m, labeling).expect("shape");
    let distance_to_p_star = final_state.distance(&target);
    let distance_to_q = final_state.distance(&TrustState::q_point(labeling));
    StochasticRun {
        iterations,
        final_state,
        distance_to_p_star,
        distance_to_q,
    }
}
