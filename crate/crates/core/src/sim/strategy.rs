use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentIndex;
use crate::attestation::{AttestationReport, Outcome};

/// How compromised agents behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Independent false accusers.
    #[default]
    NonCooperative,
    /// Colluders that shield each other.
    Cooperative,
}

/// The decision a compromised agent is asked to make.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role<'a> {
    /// Which agent to challenge; `scheduled` is the scheduler's uniform pick.
    VerifierChoice { scheduled: AgentIndex },
    /// What to broadcast about `attester`.
    ReportOutcome { attester: AgentIndex },
    /// How to read a received report when updating its own trust vector.
    TrustUpdate { report: &'a AttestationReport },
    /// What to send the leader as PMU data.
    SeData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Attest(AgentIndex),
    Report(Outcome),
    Update(Outcome),
    /// Truth plus the configured voltage bias.
    BiasedData,
}

/// What a compromised agent knows when it acts.
#[derive(Debug, Clone, Copy)]
pub struct ActionContext<'a> {
    pub strategy: Strategy,
    pub agent: AgentIndex,
    pub malicious: &'a [AgentIndex],
    /// Indexed by agent; `false` once evicted.
    pub active: &'a [bool],
}

impl ActionContext<'_> {
    fn is_fellow(&self, a: AgentIndex) -> bool {
        a != self.agent && self.malicious.contains(&a)
    }
}

pub fn malicious_action<R: Rng + ?Sized>(ctx: &ActionContext<'_>, role: Role<'_>, rng: &mut R) -> Action {
    match role {
        Role::VerifierChoice { scheduled } => match ctx.strategy {
            Strategy::Cooperative => {
                let fellows: Vec<AgentIndex> = ctx
                    .malicious
                    .iter()
                    .copied()
                    .filter(|a| ctx.is_fellow(*a) && ctx.active[a.0])
                    .collect();
                if fellows.is_empty() {
                    Action::Attest(scheduled)
                } else {
                    Action::Attest(fellows[rng.random_range(0..fellows.len())])
                }
            }
            Strategy::NonCooperative => Action::Attest(scheduled),
        },
        Role::ReportOutcome { attester } => {
            let fellow = ctx.is_fellow(attester);
            let outcome = match (ctx.strategy, fellow) {
                (_, false) => Outcome::Negative,
                (Strategy::Cooperative, true) => Outcome::Positive,
                (Strategy::NonCooperative, true) => Outcome::from_pass(rng.random_bool(0.5)),
            };
            Action::Report(outcome)
        }
        Role::TrustUpdate { report } => trust_reading(ctx, report),
        Role::SeData => Action::BiasedData,
    }
}

/// Colluders turn every decrement against a fellow into an increment.
pub(super) fn trust_reading(ctx: &ActionContext<'_>, report: &AttestationReport) -> Action {
    let shield = ctx.strategy == Strategy::Cooperative
        && ctx.is_fellow(report.attester)
        && report.outcome == Outcome::Negative;
    Action::Update(if shield {
        Outcome::Positive
    } else {
        report.outcome
    })
}
