//! Discrete-event orchestration of one scenario: election, attestation
//! windows, trust updates with eviction, and the leader's state estimator.

mod config;
mod metrics;
mod strategy;
pub mod sweep;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentIndex;
use crate::attestation::{self, AttestationReport, ImageAttester, Outcome, ProgramImage};
use crate::commitment;
use crate::election::{self, ElectionTranscript, Elector, HonestElector};
use crate::estimation::{EstimationError, Estimator, GridCase};
use crate::trust::{check_eviction, StepRule, TrustMatrix};

pub use config::{ConfigError, ScenarioConfig, StopRule};
pub use metrics::{detection_metrics, AgentDetection, DetectionMetrics};
pub use strategy::{malicious_action, Action, ActionContext, Role, Strategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("every agent has been evicted at tick {0}")]
    Aborted(u64),
    #[error("state estimation failed: {0}")]
    Estimation(#[from] EstimationError),
    #[error("election failed: {0}")]
    Election(#[from] election::ElectionError),
}

/// One changed trust entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRow {
    pub tick: u64,
    pub observer: AgentIndex,
    pub subject: AgentIndex,
    pub trust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eviction {
    pub tick: u64,
    pub agent: AgentIndex,
    pub votes: usize,
    pub n_active: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeRecord {
    pub sample: usize,
    pub tick: u64,
    pub leader: AgentIndex,
    pub reporting: usize,
    pub squared_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SamplesComplete,
    Identification,
    MaliciousEvicted,
    TickLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioOutcome {
    /// Every malicious agent evicted and no honest one.
    CorrectIdentification,
    /// At least one honest agent was evicted.
    Misidentification,
    /// Some malicious agent is still active and no honest one was evicted.
    Incomplete,
}

/// Full record of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub config: ScenarioConfig,
    pub hash_algorithm: String,
    pub elections: Vec<ElectionTranscript>,
    pub reports: Vec<AttestationReport>,
    pub trust: Vec<TrustRow>,
    pub evictions: Vec<Eviction>,
    pub se_errors: Vec<SeRecord>,
    pub skipped_samples: Vec<usize>,
    pub compromise_tick: u64,
    pub end_tick: u64,
    pub stop: StopReason,
    pub outcome: ScenarioOutcome,
    /// Tick and report count when at least half the agents' worth of honest
    /// observers first held the correct zero/non-zero pattern.
    pub identification_tick: Option<u64>,
    pub attestations_at_identification: Option<usize>,
    /// Lowest trust any honest observer ever held in another honest agent.
    pub min_honest_trust: f64,
    /// Highest trust any honest observer held in a malicious agent after
    /// the compromise.
    pub max_malicious_trust: f64,
    /// Trust table when the run stopped.
    pub final_trust: Vec<Vec<f64>>,
}

impl ScenarioTrace {
    pub fn evicted(&self, agent: AgentIndex) -> Option<&Eviction> {
        self.evictions.iter().find(|e| e.agent == agent)
    }

    pub fn honest_evictions(&self) -> usize {
        self.evictions
            .iter()
            .filter(|e| !self.config.malicious.contains(&e.agent))
            .count()
    }
}

struct Stream;

impl Stream {
    const SCHEDULE: u64 = 1;
    const ATTEST: u64 = 2;
    const ELECTION: u64 = 3;
    const MEASURE: u64 = 4;

    fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

/// Tracks how many honest observers hold the right zero/non-zero pattern.
struct Identification {
    honest: Vec<bool>,
    wrong: Vec<usize>,
    correct_observers: usize,
}

impl Identification {
    fn new(trust: &TrustMatrix<f64>, honest: &[bool]) -> Self {
        let n = honest.len();
        let mut wrong = vec![0; n];
        for i in (0..n).filter(|&i| honest[i]) {
            wrong[i] = (0..n)
                .filter(|&j| j != i && Self::is_wrong(honest[j], trust.get(i, j)))
                .count();
        }
        let correct_observers = (0..n).filter(|&i| honest[i] && wrong[i] == 0).count();
        Self {
            honest: honest.to_vec(),
            wrong,
            correct_observers,
        }
    }

    fn is_wrong(subject_honest: bool, p: f64) -> bool {
        if subject_honest {
            p == 0.0
        } else {
            p != 0.0
        }
    }

    fn update(&mut self, i: usize, j: usize, old: f64, new: f64) {
        if !self.honest[i] {
            return;
        }
        let (was, is) = (
            Self::is_wrong(self.honest[j], old),
            Self::is_wrong(self.honest[j], new),
        );
        if was == is {
            return;
        }
        if is {
            if self.wrong[i] == 0 {
                self.correct_observers -= 1;
            }
            self.wrong[i] += 1;
        } else {
            self.wrong[i] -= 1;
            if self.wrong[i] == 0 {
                self.correct_observers += 1;
            }
        }
    }

    fn reached(&self) -> bool {
        2 * self.correct_observers >= self.honest.len()
    }
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    n: usize,
    honest: Vec<bool>,
    active: Vec<bool>,
    compromised: bool,
    compromise_tick: u64,
    reference: ProgramImage,
    tampered: ProgramImage,
    trust: TrustMatrix<f64>,
    rule: StepRule,
    ident: Identification,
    leader: Option<AgentIndex>,
    estimator: Option<(Estimator, Vec<nalgebra::DVector<f64>>)>,
    rng_attest: ChaCha8Rng,
    rng_election: ChaCha8Rng,
    rng_measure: ChaCha8Rng,
    elections: Vec<ElectionTranscript>,
    reports: Vec<AttestationReport>,
    trust_rows: Vec<TrustRow>,
    evictions: Vec<Eviction>,
    se_errors: Vec<SeRecord>,
    skipped: Vec<usize>,
    next_sample: usize,
    identification: Option<(u64, usize)>,
    min_honest: f64,
    max_malicious: f64,
}

impl<'a> Sim<'a> {
    fn active_list(&self) -> Vec<AgentIndex> {
        (0..self.n)
            .filter(|&i| self.active[i])
            .map(AgentIndex)
            .collect()
    }

    fn is_adversarial(&self, a: AgentIndex) -> bool {
        self.compromised && !self.honest[a.0]
    }

    fn elect(&mut self, tick: u64) -> Result<(), ScenarioError> {
        let active = self.active_list();
        match active.len() {
            0 => return Err(ScenarioError::Aborted(tick)),
            1 => {
                self.leader = Some(active[0]);
                return Ok(());
            }
            _ => {}
        }
        let mut electors: Vec<Box<dyn Elector>> = active
            .iter()
            .map(|&a| Box::new(HonestElector(a)) as Box<dyn Elector>)
            .collect();
        let mut transcript = election::run_election(&mut electors, &mut self.rng_election)?;
        transcript.round = self.elections.len() as u32;
        transcript.tick = tick;
        self.leader = Some(transcript.leader_agent);
        self.elections.push(transcript);
        Ok(())
    }

    /// The leader drops every archived reading from agents no longer active.
    fn refilter(&mut self) -> Result<(), ScenarioError> {
        let trusted = self.active_list();
        if let Some((est, _)) = self.estimator.as_mut() {
            est.refilter(&trusted)?;
        }
        Ok(())
    }

    fn sample(&mut self, s: usize, tick: u64) -> Result<(), ScenarioError> {
        let trusted = self.active_list();
        let biased: Vec<AgentIndex> = trusted
            .iter()
            .copied()
            .filter(|a| self.is_adversarial(*a))
            .collect();
        let leader = self.leader.expect("leader elected at start");
        let Some((est, truths)) = self.estimator.as_mut() else {
            return Ok(());
        };
        match est.step(s, &truths[s], &trusted, &biased, &mut self.rng_measure) {
            Ok(out) => self.se_errors.push(SeRecord {
                sample: s,
                tick,
                leader,
                reporting: out.reporting,
                squared_error: out.squared_error,
                max_abs_error: out.max_abs_error,
            }),
            Err(EstimationError::Singular) => self.skipped.push(s),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn flush_samples(&mut self, before: u64) -> Result<(), ScenarioError> {
        while self.estimator.is_some() && self.next_sample < self.cfg.n_samples {
            let tick = self.next_sample as u64 * self.cfg.sample_interval;
            if tick >= before {
                break;
            }
            self.sample(self.next_sample, tick)?;
            self.next_sample += 1;
        }
        Ok(())
    }

    fn attestation(
        &mut self,
        tick: u64,
        verifier: AgentIndex,
        scheduled: AgentIndex,
    ) -> Result<Option<AttestationReport>, ScenarioError> {
        if !self.active[verifier.0] || !self.active[scheduled.0] {
            return Ok(None);
        }
        let ctx = ActionContext {
            strategy: self.cfg.strategy,
            agent: verifier,
            malicious: &self.cfg.malicious,
            active: &self.active,
        };
        if self.is_adversarial(verifier) {
            let attester = match malicious_action(&ctx, Role::VerifierChoice { scheduled }, &mut self.rng_attest) {
                Action::Attest(a) => a,
                _ => scheduled,
            };
            let outcome = match malicious_action(&ctx, Role::ReportOutcome { attester }, &mut self.rng_attest) {
                Action::Report(o) => o,
                _ => Outcome::Negative,
            };
            return Ok(AttestationReport::new(tick, verifier, attester, outcome).ok());
        }
        let image = if self.is_adversarial(scheduled) {
            &self.tampered
        } else {
            &self.reference
        };
        let target = ImageAttester {
            agent: scheduled,
            image,
        };
        Ok(attestation::attest(verifier, &self.reference, &target, tick, &mut self.rng_attest)
            .expect("scheduled pairs are distinct"))
    }

    fn apply(&mut self, report: &AttestationReport) {
        let j = report.attester.0;
        let before: Vec<f64> = (0..self.n).map(|i| self.trust.get(i, j)).collect();
        let step = self.rule.step::<f64>();
        let strategy = self.cfg.strategy;
        let malicious = &self.cfg.malicious;
        let active = &self.active;
        let adversarial = |a: AgentIndex| self.compromised && !self.honest[a.0];
        let readings: Vec<Option<Outcome>> = (0..self.n)
            .map(|i| {
                let observer = AgentIndex(i);
                if !active[i] {
                    return None;
                }
                if adversarial(observer) {
                    let ctx = ActionContext {
                        strategy,
                        agent: observer,
                        malicious,
                        active,
                    };
                    match strategy::trust_reading(&ctx, report) {
                        Action::Update(o) => Some(o),
                        _ => Some(report.outcome),
                    }
                } else {
                    Some(report.outcome)
                }
            })
            .collect();
        self.trust
            .apply_report_with(report, step, |i| readings[i.0])
            .expect("report agents are in range");
        self.rule.advance();

        let post_compromise = self.compromised;
        for i in 0..self.n {
            let new = self.trust.get(i, j);
            if new != before[i] {
                self.ident.update(i, j, before[i], new);
                if self.cfg.record_trust {
                    self.trust_rows.push(TrustRow {
                        tick: report.tick,
                        observer: AgentIndex(i),
                        subject: report.attester,
                        trust: new,
                    });
                }
            }
            if self.honest[i] && i != j {
                if self.honest[j] {
                    self.min_honest = self.min_honest.min(new);
                } else if post_compromise {
                    self.max_malicious = self.max_malicious.max(new);
                }
            }
        }
    }

    /// Evicts every agent that has lost a strict majority. Only `subject`'s
    /// column changed since the last check, so the others are rescanned only
    /// after an eviction lowers the threshold.
    fn evictions_after(&mut self, tick: u64, subject: AgentIndex) -> Result<bool, ScenarioError> {
        let active = self.active_list();
        if !check_eviction(self.trust.eviction_votes(subject, &active), active.len()) {
            return Ok(false);
        }
        let mut leader_gone = false;
        let mut any = false;
        loop {
            let active = self.active_list();
            let n_active = active.len();
            let hit = active.iter().copied().find_map(|a| {
                let votes = self.trust.eviction_votes(a, &active);
                check_eviction(votes, n_active).then_some((a, votes))
            });
            let Some((agent, votes)) = hit else { break };
            self.active[agent.0] = false;
            self.evictions.push(Eviction {
                tick,
                agent,
                votes,
                n_active,
            });
            self.rule.set_active(n_active - 1);
            leader_gone |= self.leader == Some(agent);
            any = true;
        }
        if any {
            if self.active.iter().all(|a| !a) {
                return Err(ScenarioError::Aborted(tick));
            }
            self.refilter()?;
            if leader_gone {
                self.elect(tick)?;
            }
        }
        Ok(any)
    }

    fn malicious_all_evicted(&self) -> bool {
        self.cfg.malicious.iter().all(|a| !self.active[a.0])
    }

    fn should_stop(&self) -> Option<StopReason> {
        match self.cfg.stop {
            StopRule::Samples => None,
            StopRule::Identification => self.identification.map(|_| StopReason::Identification),
            StopRule::MaliciousEvicted => self
                .malicious_all_evicted()
                .then_some(StopReason::MaliciousEvicted),
        }
    }
}

/// Runs one scenario to completion. Identical configurations produce
/// identical traces.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioTrace, ScenarioError> {
    cfg.validate()?;
    let grid = cfg.load_grid()?;
    run_with_grid(cfg, grid)
}

/// Like [`run_scenario`] with the grid case supplied by the caller.
pub fn run_with_grid(cfg: &ScenarioConfig, grid: Option<GridCase>) -> Result<ScenarioTrace, ScenarioError> {
    cfg.validate()?;
    if let Some(case) = &grid {
        cfg.check_grid(case)?;
    }
    let n = cfg.n_agents;
    let mut honest = vec![true; n];
    for a in &cfg.malicious {
        honest[a.0] = false;
    }
    let reference = ProgramImage::reference(cfg.image_len, cfg.seed ^ 0x5eed).expect("image_len > 0");
    let mut tampered = reference.clone();
    tampered.flip(cfg.image_len / 2);
    let trust = TrustMatrix::<f64>::new(n);
    let ident = Identification::new(&trust, &honest);
    let estimator = grid.map(|case| {
        let truths = case.true_states(cfg.n_samples);
        (Estimator::new(case, cfg.se), truths)
    });
    let compromise_tick = cfg.compromise_at_sample as u64 * cfg.sample_interval;
    let end_tick = cfg.end_tick();

    let mut sim = Sim {
        cfg,
        n,
        honest,
        active: vec![true; n],
        compromised: compromise_tick == 0 && !cfg.malicious.is_empty(),
        compromise_tick,
        reference,
        tampered,
        trust,
        rule: StepRule::new(cfg.step_rule, n),
        ident,
        leader: None,
        estimator,
        rng_attest: Stream::rng(cfg.seed, Stream::ATTEST),
        rng_election: Stream::rng(cfg.seed, Stream::ELECTION),
        rng_measure: Stream::rng(cfg.seed, Stream::MEASURE),
        elections: Vec::new(),
        reports: Vec::new(),
        trust_rows: Vec::new(),
        evictions: Vec::new(),
        se_errors: Vec::new(),
        skipped: Vec::new(),
        next_sample: 0,
        identification: None,
        min_honest: 1.0,
        max_malicious: if cfg.malicious.is_empty() { 0.0 } else { 1.0 },
    };
    if cfg.record_trust {
        for i in 0..n {
            for j in 0..n {
                sim.trust_rows.push(TrustRow {
                    tick: 0,
                    observer: AgentIndex(i),
                    subject: AgentIndex(j),
                    trust: 1.0,
                });
            }
        }
    }
    sim.elect(0)?;
    if sim.ident.reached() && sim.compromised {
        sim.identification = Some((0, 0));
    }

    let mut rng_schedule = Stream::rng(cfg.seed, Stream::SCHEDULE);
    let mut stop = sim.should_stop();
    let mut last_tick = 0;
    let mut window_start = 0;
    'windows: while stop.is_none() && window_start < end_tick {
        let active = sim.active_list();
        let events = attestation::schedule_window(
            &active,
            window_start,
            cfg.window_ticks,
            cfg.verifier_mode,
            &mut rng_schedule,
        );
        for ev in events {
            if ev.tick >= end_tick {
                break;
            }
            sim.flush_samples(ev.tick)?;
            if !sim.compromised && !cfg.malicious.is_empty() && ev.tick >= sim.compromise_tick {
                sim.compromised = true;
            }
            last_tick = ev.tick;
            let Some(report) = sim.attestation(ev.tick, ev.verifier, ev.attester)? else {
                continue;
            };
            sim.apply(&report);
            sim.reports.push(report);
            sim.evictions_after(ev.tick, report.attester)?;
            if sim.identification.is_none() && sim.compromised && sim.ident.reached() {
                sim.identification = Some((ev.tick, sim.reports.len()));
            }
            stop = sim.should_stop();
            if stop.is_some() {
                break 'windows;
            }
        }
        window_start += cfg.window_ticks;
        sim.flush_samples(window_start.min(end_tick))?;
    }
    let (stop, end) = match stop {
        Some(s) => (s, last_tick),
        None if cfg.stop == StopRule::Samples => (StopReason::SamplesComplete, end_tick),
        None => (StopReason::TickLimit, end_tick),
    };
    if stop == StopReason::SamplesComplete {
        sim.flush_samples(end_tick)?;
    }

    let honest_evicted = sim.evictions.iter().any(|e| sim.honest[e.agent.0]);
    let outcome = if honest_evicted {
        ScenarioOutcome::Misidentification
    } else if sim.malicious_all_evicted() {
        ScenarioOutcome::CorrectIdentification
    } else {
        ScenarioOutcome::Incomplete
    };
    let final_trust = (0..n).map(|i| sim.trust.row(i).to_vec()).collect();
    Ok(ScenarioTrace {
        config: cfg.clone(),
        hash_algorithm: commitment::HASH_ALGORITHM.to_string(),
        elections: sim.elections,
        reports: sim.reports,
        trust: sim.trust_rows,
        evictions: sim.evictions,
        se_errors: sim.se_errors,
        skipped_samples: sim.skipped,
        compromise_tick,
        end_tick: end,
        stop,
        outcome,
        identification_tick: sim.identification.map(|(t, _)| t),
        attestations_at_identification: sim.identification.map(|(_, c)| c),
        min_honest_trust: sim.min_honest,
        max_malicious_trust: sim.max_malicious,
        final_trust,
    })
}

/// Picks `m` distinct agents out of `n` from a seeded stream.
pub fn random_malicious_set(n: usize, m: usize, seed: u64) -> Vec<AgentIndex> {
    let mut rng = Stream::rng(seed, 7);
    let mut chosen = BTreeSet::new();
    while chosen.len() < m.min(n) {
        chosen.insert(rng.random_range(0..n));
    }
    chosen.into_iter().map(AgentIndex).collect()
}

#[cfg(test)]
mod tests;
