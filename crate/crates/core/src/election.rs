//! Broadcast leader election with committed contributions.
//!
//! One round runs as: every participant broadcasts a fresh 32-bit id, commits
//! to a contribution `C_i` in `0..N`, broadcasts the commitment, then reveals
//! `(C_i, nonce)`. Each agent checks every reveal against its commitment,
//! drops the ones that fail, and picks the `k`-th smallest id (0-based) among
//! the remaining agents with `k = (sum of valid C_i) mod N_valid`.

use std::collections::{HashMap, HashSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentIndex;
use crate::commitment::{self, Commitment, Opening};

/// Ephemeral 32-bit identity broadcast at the start of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElectionError {
    #[error("an election needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("contribution {value} outside 0..{modulus}")]
    InvalidContribution { value: u32, modulus: u32 },
    #[error("ids must be strictly ascending")]
    UnsortedIds,
    #[error("leader index {k} out of range for {len} candidates")]
    IndexOutOfRange { k: usize, len: usize },
    #[error("only {valid} agents revealed valid contributions")]
    ElectionFailed { valid: usize },
    #[error("honest agents derived different transcripts")]
    Disagreement,
}

/// Draws `n` pairwise distinct ids. Agents whose id collides with another
/// agent's id draw again until the list is collision free.
pub fn draw_ids<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<AgentId>, ElectionError> {
    if n < 2 {
        return Err(ElectionError::TooFewAgents(n));
    }
    let mut ids: Vec<AgentId> = (0..n).map(|_| AgentId(rng.next_u32())).collect();
    loop {
        let mut counts: HashMap<AgentId, usize> = HashMap::with_capacity(n);
        for id in &ids {
            *counts.entry(*id).or_default() += 1;
        }
        if counts.len() == n {
            return Ok(ids);
        }
        for id in ids.iter_mut() {
            if counts[id] > 1 {
                *id = AgentId(rng.next_u32());
            }
        }
    }
}

pub fn compute_leader_index(contributions: &[u32], n: u32) -> Result<u32, ElectionError> {
    if n == 0 {
        return Err(ElectionError::TooFewAgents(0));
    }
    let mut sum: u64 = 0;
    for &c in contributions {
        if c >= n {
            return Err(ElectionError::InvalidContribution {
                value: c,
                modulus: n,
            });
        }
        sum += u64::from(c);
    }
    Ok((sum % u64::from(n)) as u32)
}

/// `k = 0` selects the smallest id.
pub fn select_leader(sorted_ids: &[AgentId], k: usize) -> Result<AgentId, ElectionError> {
    if sorted_ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ElectionError::UnsortedIds);
    }
    sorted_ids
        .get(k)
        .copied()
        .ok_or(ElectionError::IndexOutOfRange {
            k,
            len: sorted_ids.len(),
        })
}

/// What a participant can see when it is asked to reveal.
#[derive(Debug)]
pub struct RevealView<'a> {
    pub ids: &'a [(AgentIndex, AgentId)],
    /// Openings already broadcast by the other participants.
    pub revealed: &'a [(AgentIndex, Option<Opening>)],
    pub modulus: u32,
}

/// Election-time behaviour of one agent.
pub trait Elector {
    fn agent(&self) -> AgentIndex;

    fn choose_contribution(&mut self, modulus: u32, rng: &mut dyn RngCore) -> u32 {
        rng.random_range(0..modulus)
    }

    /// Returns the opening to broadcast, or `None` to stay silent.
    fn reveal(&mut self, committed: &Opening, _view: &RevealView<'_>) -> Option<Opening> {
        Some(committed.clone())
    }

    /// Rushing participants reveal after everyone else.
    fn rushes(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HonestElector(pub AgentIndex);

impl Elector for HonestElector {
    fn agent(&self) -> AgentIndex {
        self.0
    }
}

/// A rushing adversary that waits for every other reveal and then tries to
/// swap its contribution for one that makes `favored` the leader.
#[derive(Debug, Clone, Copy)]
pub struct SteeringElector {
    pub agent: AgentIndex,
    pub favored: AgentIndex,
}

impl Elector for SteeringElector {
    fn agent(&self) -> AgentIndex {
        self.agent
    }

    fn rushes(&self) -> bool {
        true
    }

    fn reveal(&mut self, committed: &Opening, view: &RevealView<'_>) -> Option<Opening> {
        let mut sorted: Vec<_> = view.ids.to_vec();
        sorted.sort_by_key(|(_, id)| *id);
        let Some(target) = sorted.iter().position(|(a, _)| *a == self.favored) else {
            return Some(committed.clone());
        };
        let n = u64::from(view.modulus);
        let others: u64 = view
            .revealed
            .iter()
            .filter(|(a, _)| *a != self.agent)
            .filter_map(|(_, o)| o.as_ref())
            .map(|o| u64::from(o.value))
            .sum();
        let wanted = ((target as u64 + n - others % n) % n) as u32;
        Some(Opening::new(wanted, committed.nonce.clone()))
    }
}

/// Everything broadcast during one round, in participant order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastLog {
    pub participants: Vec<AgentIndex>,
    pub ids: Vec<AgentId>,
    pub commitments: Vec<Commitment>,
    pub reveals: Vec<Option<Opening>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionTranscript {
    pub round: u32,
    pub tick: u64,
    pub participants: Vec<AgentIndex>,
    pub ids: Vec<AgentId>,
    pub commitments: Vec<Commitment>,
    pub openings: Vec<Option<Opening>>,
    pub k: u32,
    pub leader: AgentId,
    pub leader_agent: AgentIndex,
    pub invalid_revealers: Vec<AgentIndex>,
}

/// The computation every agent performs locally on the broadcast log.
pub fn derive_transcript(log: &BroadcastLog) -> Result<ElectionTranscript, ElectionError> {
    let n = log.participants.len();
    let modulus = n as u32;
    let mut valid: Vec<(AgentId, AgentIndex, u32)> = Vec::with_capacity(n);
    let mut invalid = Vec::new();
    for i in 0..n {
        let ok = log.reveals[i]
            .as_ref()
            .filter(|o| o.value < modulus && commitment::verify(&log.commitments[i], o));
        match ok {
            Some(o) => valid.push((log.ids[i], log.participants[i], o.value)),
            None => invalid.push(log.participants[i]),
        }
    }
    if valid.len() < 2 {
        return Err(ElectionError::ElectionFailed { valid: valid.len() });
    }
    let n_valid = valid.len() as u32;
    let reduced: Vec<u32> = valid.iter().map(|(_, _, c)| c % n_valid).collect();
    let k = compute_leader_index(&reduced, n_valid)?;
    valid.sort_by_key(|(id, _, _)| *id);
    let sorted: Vec<AgentId> = valid.iter().map(|(id, _, _)| *id).collect();
    let leader = select_leader(&sorted, k as usize)?;
    Ok(ElectionTranscript {
        round: 0,
        tick: 0,
        participants: log.participants.clone(),
        ids: log.ids.clone(),
        commitments: log.commitments.clone(),
        openings: log.reveals.clone(),
        k,
        leader,
        leader_agent: valid[k as usize].1,
        invalid_revealers: invalid,
    })
}

/// Runs the full broadcast round and returns the transcript every honest
/// participant agrees on.
pub fn run_election<R: RngCore>(
    electors: &mut [Box<dyn Elector + '_>],
    rng: &mut R,
) -> Result<ElectionTranscript, ElectionError> {
    let (_, transcripts) = run_round(electors, rng)?;
    let first = transcripts
        .first()
        .cloned()
        .ok_or(ElectionError::TooFewAgents(0))?;
    if transcripts.iter().any(|t| *t != first) {
        return Err(ElectionError::Disagreement);
    }
    Ok(first)
}

/// Like [`run_election`] but also hands back the broadcast log and the
/// transcript each non-rushing participant derived on its own.
pub fn run_round<R: RngCore>(
    electors: &mut [Box<dyn Elector + '_>],
    rng: &mut R,
) -> Result<(BroadcastLog, Vec<ElectionTranscript>), ElectionError> {
    let n = electors.len();
    let participants: Vec<AgentIndex> = electors.iter().map(|e| e.agent()).collect();
    let distinct: HashSet<_> = participants.iter().collect();
    if n < 2 || distinct.len() != n {
        return Err(ElectionError::TooFewAgents(distinct.len()));
    }
    let modulus = n as u32;
    let ids = draw_ids(n, rng)?;

    let mut openings = Vec::with_capacity(n);
    let mut commitments = Vec::with_capacity(n);
    for e in electors.iter_mut() {
        let value = e.choose_contribution(modulus, rng);
        let nonce = commitment::random_nonce(rng);
        commitments.push(commitment::commit(value, &nonce).expect("nonce length is fixed"));
        openings.push(Opening::new(value, nonce));
    }

    let id_pairs: Vec<(AgentIndex, AgentId)> =
        participants.iter().copied().zip(ids.iter().copied()).collect();
    let mut reveals: Vec<Option<Opening>> = vec![None; n];
    let mut revealed: Vec<(AgentIndex, Option<Opening>)> = Vec::with_capacity(n);
    let order: Vec<usize> = (0..n)
        .filter(|&i| !electors[i].rushes())
        .chain((0..n).filter(|&i| electors[i].rushes()))
        .collect();
    for i in order {
        let view = RevealView {
            ids: &id_pairs,
            revealed: &revealed,
            modulus,
        };
        let r = electors[i].reveal(&openings[i], &view);
        revealed.push((participants[i], r.clone()));
        reveals[i] = r;
    }

    let log = BroadcastLog {
        participants,
        ids,
        commitments,
        reveals,
    };
    let transcripts = electors
        .iter()
        .filter(|e| !e.rushes())
        .map(|_| derive_transcript(&log))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((log, transcripts))
}
