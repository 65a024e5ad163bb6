//! Per-observer trust values and the report-driven update rule.
//!
//! When verifier `k` reports on attester `j`, every observer `i != j` moves
//! its trust in `j` by `±step * p[i][k]` and projects back onto `[0, 1]`.
//! The step is `1/N` (fixed rule) or `1/(t+1)` with one global report
//! counter `t` (diminishing rule).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentIndex;
use crate::attestation::{AttestationReport, Outcome};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("agent {0} reported on itself")]
    InvalidReport(AgentIndex),
    #[error("agent {agent} outside a network of {n}")]
    UnknownAgent { agent: AgentIndex, n: usize },
    #[error("trust entry ({i}, {j}) is outside [0, 1]")]
    OutOfRange { i: usize, j: usize },
    #[error("self-trust of agent {0} is not 1")]
    Diagonal(usize),
    #[error("expected a square matrix of size {0}")]
    Shape(usize),
}

pub fn project_unit<T: Scalar>(x: T) -> T {
    x.clamp_unit()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    #[default]
    Fixed,
    Diminishing,
}

/// Step-size schedule for trust increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `1/n`, with `n` the number of active agents.
    Fixed { n: usize },
    /// `1/(t+1)`, `t` counting reports processed so far.
    Diminishing { t: u64 },
}

impl StepRule {
    pub fn new(kind: StepKind, n: usize) -> Self {
        match kind {
            StepKind::Fixed => StepRule::Fixed { n },
            StepKind::Diminishing => StepRule::Diminishing { t: 0 },
        }
    }

    pub fn step<T: Scalar>(&self) -> T {
        match *self {
            StepRule::Fixed { n } => T::one() / T::from_count(n.max(1)),
            StepRule::Diminishing { t } => T::one() / T::from_count(t as usize + 1),
        }
    }

    pub fn advance(&mut self) {
        if let StepRule::Diminishing { t } = self {
            *t += 1;
        }
    }

    /// Rescales the fixed rule after the active population changes.
    pub fn set_active(&mut self, n_active: usize) {
        if let StepRule::Fixed { n } = self {
            *n = n_active;
        }
    }
}

/// Dense `N x N` trust table, row = observer, column = subject.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustMatrix<T> {
    n: usize,
    p: Vec<T>,
}

impl<T: Scalar> TrustMatrix<T> {
    /// Everyone starts out fully trusted.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            p: vec![T::one(); n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, TrustError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(TrustError::Shape(n));
        }
        let p: Vec<T> = rows.into_iter().flatten().collect();
        let m = Self { n, p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if v < T::zero() || v > T::one() {
                    return Err(TrustError::OutOfRange { i, j });
                }
            }
            if self.get(i, i) != T::one() {
                return Err(TrustError::Diagonal(i));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, observer: usize, subject: usize) -> T {
        self.p[observer * self.n + subject]
    }

    #[inline]
    fn set(&mut self, observer: usize, subject: usize, v: T) {
        self.p[observer * self.n + subject] = v;
    }

    pub fn row(&self, observer: usize) -> &[T] {
        &self.p[observer * self.n..(observer + 1) * self.n]
    }

    /// Overwrites an off-diagonal entry after projecting it onto `[0, 1]`.
    pub fn set_entry(&mut self, observer: usize, subject: usize, v: T) {
        if observer != subject {
            self.set(observer, subject, v.clamp_unit());
        }
    }

    /// Applies one broadcast report to every observer other than the attester.
    pub fn apply_report(
        &mut self,
        report: &AttestationReport,
        rule: &mut StepRule,
    ) -> Result<(), TrustError> {
        let step = rule.step::<T>();
        self.apply_report_with(report, step, |_| Some(report.outcome))?;
        rule.advance();
        Ok(())
    }

    /// Applies a report with a per-observer reading of its outcome.
    ///
    /// `interpret` returns the outcome observer `i` acts on, or `None` if `i`
    /// ignores the report. Returns the number of observers updated.
    pub fn apply_report_with<F>(
        &mut self,
        report: &AttestationReport,
        step: T,
        mut interpret: F,
    ) -> Result<usize, TrustError>
    where
        F: FnMut(AgentIndex) -> Option<Outcome>,
    {
        let (k, j) = (report.verifier.0, report.attester.0);
        if k == j {
            return Err(TrustError::InvalidReport(report.verifier));
        }
        for a in [report.verifier, report.attester] {
            if a.0 >= self.n {
                return Err(TrustError::UnknownAgent { agent: a, n: self.n });
            }
        }
        let mut touched = 0;
        for i in 0..self.n {
            if i == j {
                continue;
            }
            let Some(outcome) = interpret(AgentIndex(i)) else {
                continue;
            };
            let delta = step * self.get(i, k);
            let old = self.get(i, j);
            let new = if outcome.is_positive() {
                old + delta
            } else {
                old - delta
            };
            self.set(i, j, new.clamp_unit());
            touched += 1;
        }
        Ok(touched)
    }

    /// Active observers other than the subject holding exactly zero trust in it.
    pub fn eviction_votes(&self, subject: AgentIndex, active: &[AgentIndex]) -> usize {
        active
            .iter()
            .filter(|i| **i != subject && self.get(i.0, subject.0) == T::zero())
            .count()
    }
}

/// Strict majority of all active agents, the accused included.
pub fn check_eviction(votes: usize, n_active: usize) -> bool {
    2 * votes > n_active
}
