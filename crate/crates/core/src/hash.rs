//! Domain-separated SHA-256 and the 32-byte value type used across the crate.
//!
//! Every hash input is framed as `len(tag) ‖ tag ‖ len(p0) ‖ p0 ‖ …` with
//! 8-byte big-endian lengths, so no two distinct (tag, parts) sequences share
//! a preimage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Length of every digest, seed and true-randomness string.
pub const DIGEST_LEN: usize = 32;

/// Hashes `parts` under the domain `tag`.
pub fn tagged_hash(tag: &str, parts: &[&[u8]]) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update((tag.len() as u64).to_be_bytes());
    h.update(tag.as_bytes());
    for part in parts {
        h.update((part.len() as u64).to_be_bytes());
        h.update(part);
    }
    h.finalize().into()
}

/// Expands `(tag, parts)` into `n` pseudo-random bytes by hashing with a block counter.
pub fn expand(tag: &str, parts: &[&[u8]], n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n + DIGEST_LEN);
    let mut counter = 0u64;
    while out.len() < n {
        let ctr = counter.to_be_bytes();
        let mut framed: Vec<&[u8]> = parts.to_vec();
        framed.push(&ctr);
        out.extend_from_slice(&tagged_hash(tag, &framed));
        counter += 1;
    }
    out.truncate(n);
    out
}

/// A 256-bit value: digests, ballot seeds, longcodes, per-cell true randomness.
///
/// Serialized as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bytes32(pub [u8; DIGEST_LEN]);

impl Bytes32 {
    pub const ZERO: Bytes32 = Bytes32([0u8; DIGEST_LEN]);

    pub fn digest(tag: &str, parts: &[&[u8]]) -> Self {
        Bytes32(tagged_hash(tag, parts))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; DIGEST_LEN]>::try_from(bytes).ok().map(Bytes32)
    }

    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut b);
        Bytes32(b)
    }
}

impl AsRef<[u8]> for Bytes32 {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Bytes32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes32({}…)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Bytes32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected 64 hex characters encoding 32 bytes")]
pub struct ParseBytes32Error;

impl FromStr for Bytes32 {
    type Err = ParseBytes32Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = hex::decode(s.trim()).map_err(|_| ParseBytes32Error)?;
        Bytes32::from_slice(&raw).ok_or(ParseBytes32Error)
    }
}

impl Serialize for Bytes32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Bytes32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<u8>` as a hex string.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
