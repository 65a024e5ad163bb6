//! Hash-based commit/reveal primitive.
//!
//! A commitment to `value` is `SHA-256(be32(value) || nonce)`. The nonce hides
//! the value until it is revealed; collision resistance binds the committer
//! to it afterwards.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Name of the digest used for commitments, recorded in trace headers.
pub const HASH_ALGORITHM: &str = "SHA-256";

pub const DIGEST_LEN: usize = 32;
pub const MIN_NONCE_LEN: usize = 16;
pub const NONCE_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitmentError {
    #[error("nonce is {len} bytes, at least {MIN_NONCE_LEN} required")]
    InvalidNonce { len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    #[serde(with = "hex_bytes")]
    pub digest: [u8; DIGEST_LEN],
}

/// The revealed contents of a commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub value: u32,
    #[serde(with = "hex_vec")]
    pub nonce: Vec<u8>,
}

impl Opening {
    pub fn new(value: u32, nonce: impl Into<Vec<u8>>) -> Self {
        Self {
            value,
            nonce: nonce.into(),
        }
    }
}

fn digest_of(value: u32, nonce: &[u8]) -> [u8; DIGEST_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(value.to_be_bytes());
    hasher.update(nonce);
    hasher.finalize().into()
}

pub fn commit(value: u32, nonce: &[u8]) -> Result<Commitment, CommitmentError> {
    if nonce.len() < MIN_NONCE_LEN {
        return Err(CommitmentError::InvalidNonce { len: nonce.len() });
    }
    Ok(Commitment {
        digest: digest_of(value, nonce),
    })
}

/// Checks an opening against a commitment. Malformed openings never verify.
pub fn verify(commitment: &Commitment, opening: &Opening) -> bool {
    match commit(opening.value, &opening.nonce) {
        Ok(c) => c == *commitment,
        Err(_) => false,
    }
}

pub fn random_nonce<R: RngCore + ?Sized>(rng: &mut R) -> Vec<u8> {
    let mut nonce = vec![0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    nonce
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn from_hex(s: &str) -> Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err("odd-length hex string".into());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|e| e.to_string()))
        .collect()
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = super::from_hex(&s).map_err(D::Error::custom)?;
        v.try_into()
            .map_err(|_| D::Error::custom("digest must be 32 bytes"))
    }
}

mod hex_vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::from_hex(&s).map_err(D::Error::custom)
    }
}
