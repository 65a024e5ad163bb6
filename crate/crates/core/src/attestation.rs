//! Software attestation: a seeded checksum walk over program memory, checked
//! against the verifier's locally computed expectation, plus the per-window
//! verification schedule.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::AgentIndex;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttestationError {
    #[error("program image is empty")]
    InvalidImage,
    #[error("walk of {walk} steps cannot cover an image of {len} bytes")]
    ShortWalk { walk: usize, len: usize },
    #[error("verifier and attester are both agent {0}")]
    SelfAttestation(AgentIndex),
}

/// Simulated program memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    bytes: Vec<u8>,
    tampered: Vec<usize>,
}

impl ProgramImage {
    pub fn new(bytes: Vec<u8>) -> Result<Self, AttestationError> {
        if bytes.is_empty() {
            return Err(AttestationError::InvalidImage);
        }
        Ok(Self {
            bytes,
            tampered: Vec::new(),
        })
    }

    /// Deterministic stand-in for the proprietor's reference firmware.
    pub fn reference(len: usize, seed: u64) -> Result<Self, AttestationError> {
        let mut bytes = vec![0u8; len];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
        Self::new(bytes)
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Offsets modified through [`ProgramImage::tamper`].
    pub fn tampered_offsets(&self) -> &[usize] {
        &self.tampered
    }

    /// Overwrites one byte, as an attacker patching the program would.
    pub fn tamper(&mut self, offset: usize, value: u8) {
        let offset = offset % self.bytes.len();
        if self.bytes[offset] != value {
            self.bytes[offset] = value;
            self.tampered.push(offset);
        }
    }

    pub fn flip(&mut self, offset: usize) {
        let offset = offset % self.bytes.len();
        let v = self.bytes[offset] ^ 0xff;
        self.tamper(offset, v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub seed: u64,
    pub walk_length: usize,
}

impl Challenge {
    /// A challenge whose walk visits every byte twice.
    pub fn covering(seed: u64, image_len: usize) -> Self {
        Self {
            seed,
            walk_length: 2 * image_len,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, image_len: usize) -> Self {
        Self::covering(rng.random(), image_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResponseDigest(pub [u8; 32]);

/// Checksum over a pseudorandom traversal of `image`.
///
/// The traversal is a sequence of seeded permutations of all offsets, so any
/// walk at least as long as the image reads every byte. Each step folds the
/// byte and its address into two 64-bit lanes with invertible mixing.
pub fn compute_response(
    image: &ProgramImage,
    challenge: &Challenge,
) -> Result<ResponseDigest, AttestationError> {
    let len = image.len();
    if len == 0 {
        return Err(AttestationError::InvalidImage);
    }
    if challenge.walk_length < len {
        return Err(AttestationError::ShortWalk {
            walk: challenge.walk_length,
            len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(challenge.seed);
    let mut order: Vec<usize> = (0..len).collect();
    let mut lanes = [challenge.seed ^ 0x243f_6a88_85a3_08d3, !challenge.seed];
    let mut remaining = challenge.walk_length;
    let mut step = 0u64;
    while remaining > 0 {
        order.shuffle(&mut rng);
        for &addr in order.iter().take(remaining) {
            let b = u64::from(image.bytes[addr]);
            let lane = (step & 1) as usize;
            let other = lanes[lane ^ 1];
            let mut s = lanes[lane];
            s ^= b.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (addr as u64).wrapping_add(step << 32);
            s = s.rotate_left(23).wrapping_mul(0xff51_afd7_ed55_8ccd);
            s = s.wrapping_add(other.rotate_right(11));
            lanes[lane] = s;
            step += 1;
        }
        remaining -= remaining.min(len);
    }
    let mut h = Sha256::new();
    h.update(challenge.seed.to_be_bytes());
    h.update((challenge.walk_length as u64).to_be_bytes());
    h.update(lanes[0].to_be_bytes());
    h.update(lanes[1].to_be_bytes());
    Ok(ResponseDigest(h.finalize().into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Positive,
    Negative,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Positive
        } else {
            Outcome::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Outcome::Positive
    }

    pub fn inverted(self) -> Self {
        Self::from_pass(!self.is_positive())
    }
}

/// Broadcast record of one challenge-response exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    pub tick: u64,
    pub verifier: AgentIndex,
    pub attester: AgentIndex,
    pub outcome: Outcome,
}

impl AttestationReport {
    pub fn new(
        tick: u64,
        verifier: AgentIndex,
        attester: AgentIndex,
        outcome: Outcome,
    ) -> Result<Self, AttestationError> {
        if verifier == attester {
            return Err(AttestationError::SelfAttestation(verifier));
        }
        Ok(Self {
            tick,
            verifier,
            attester,
            outcome,
        })
    }
}

/// The side of an agent that answers challenges.
pub trait Attester {
    fn agent(&self) -> AgentIndex;

    /// `None` when the agent cannot be reached.
    fn respond(&self, challenge: &Challenge) -> Option<ResponseDigest>;
}

/// An attester answering from whatever program image it is running.
#[derive(Debug, Clone)]
pub struct ImageAttester<'a> {
    pub agent: AgentIndex,
    pub image: &'a ProgramImage,
}

impl Attester for ImageAttester<'_> {
    fn agent(&self) -> AgentIndex {
        self.agent
    }

    fn respond(&self, challenge: &Challenge) -> Option<ResponseDigest> {
        compute_response(self.image, challenge).ok()
    }
}

/// Honest verifier procedure: challenge, compare against the expected
/// response computed from the reference image, and produce the report.
/// Returns `Ok(None)` when the attester does not answer.
pub fn attest<R: Rng + ?Sized>(
    verifier: AgentIndex,
    reference: &ProgramImage,
    attester: &dyn Attester,
    tick: u64,
    rng: &mut R,
) -> Result<Option<AttestationReport>, AttestationError> {
    if verifier == attester.agent() {
        return Err(AttestationError::SelfAttestation(verifier));
    }
    let challenge = Challenge::random(rng, reference.len());
    let expected = compute_response(reference, &challenge)?;
    let Some(response) = attester.respond(&challenge) else {
        return Ok(None);
    };
    let outcome = Outcome::from_pass(response == expected);
    AttestationReport::new(tick, verifier, attester.agent(), outcome).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    /// Every active agent verifies exactly once per window.
    #[default]
    OncePerWindow,
    /// Each of the window's events picks its verifier uniformly at random.
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledAttestation {
    pub tick: u64,
    pub verifier: AgentIndex,
    pub attester: AgentIndex,
}

/// One window of verification events starting at `start`, ordered by
/// `(tick, verifier)`. Attesters are drawn uniformly from the other active
/// agents; strategies may override that choice when the event fires.
pub fn schedule_window<R: Rng + ?Sized>(
    active: &[AgentIndex],
    start: u64,
    window: u64,
    mode: VerifierMode,
    rng: &mut R,
) -> Vec<ScheduledAttestation> {
    if active.len() < 2 || window == 0 {
        return Vec::new();
    }
    let verifiers: Vec<AgentIndex> = match mode {
        VerifierMode::OncePerWindow => active.to_vec(),
        VerifierMode::UniformRandom => (0..active.len())
            .map(|_| active[rng.random_range(0..active.len())])
            .collect(),
    };
    let mut events: Vec<ScheduledAttestation> = verifiers
        .into_iter()
        .map(|verifier| {
            let tick = start + rng.random_range(0..window);
            let attester = pick_other(active, verifier, rng);
            ScheduledAttestation {
                tick,
                verifier,
                attester,
            }
        })
        .collect();
    events.sort_by_key(|e| (e.tick, e.verifier));
    events
}

/// Uniform choice among `pool` excluding `me`. `pool` must contain some other agent.
pub fn pick_other<R: Rng + ?Sized>(pool: &[AgentIndex], me: AgentIndex, rng: &mut R) -> AgentIndex {
    let others: Vec<AgentIndex> = pool.iter().copied().filter(|a| *a != me).collect();
    others[rng.random_range(0..others.len())]
}
