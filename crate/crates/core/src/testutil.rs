//! Shared unit-test fixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::manifest::{CodeFormat, Contest, ElectionConfig, ElectionManifest, ElectionOptions, TrusteeConfig};
use crate::TrusteeShare;

pub fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn config() -> ElectionConfig {
    ElectionConfig {
        election_id: "unit".into(),
        contests: vec![
            Contest::plurality("mayor", &["ann", "bob", "cat"], 1),
            Contest::plurality("board", &["dan", "eve", "fay"], 2),
            Contest::irv("council", &["gus", "hal", "ivy"], 2),
        ],
        trustees: TrusteeConfig::default(),
        codes: CodeFormat::default(),
        options: ElectionOptions { mix_rounds: 12, ..ElectionOptions::default() },
    }
}

pub fn manifest() -> (ElectionManifest, Vec<TrusteeShare>) {
    config().setup(&mut seeded(99)).unwrap()
}
