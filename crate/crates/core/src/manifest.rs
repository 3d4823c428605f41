//! Election manifest: contests, trustee keys, group parameters and options.

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraError, GroupParams};
use crate::elgamal::{keygen, ElGamalError};
use crate::{Group, Params, TrusteeKeys, TrusteeShare};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("contest {0}: {1}")]
    Contest(String, String),
    #[error("duplicate contest id {0}")]
    DuplicateContest(String),
    #[error("shortcode length must be between 2 and 64 hex characters")]
    CodeFormat,
    #[error(transparent)]
    Keys(#[from] ElGamalError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// How a contest is counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Up to `selections` marks; per-candidate counts.
    Plurality { selections: usize },
    /// Ranked choice over `ranks` positions, counted by instant runoff.
    Irv { ranks: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contest {
    pub id: String,
    pub candidates: Vec<String>,
    #[serde(flatten)]
    pub method: Method,
}

impl Contest {
    pub fn plurality(id: &str, candidates: &[&str], selections: usize) -> Self {
        Contest {
            id: id.into(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            method: Method::Plurality { selections },
        }
    }

    pub fn irv(id: &str, candidates: &[&str], ranks: usize) -> Self {
        Contest {
            id: id.into(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            method: Method::Irv { ranks },
        }
    }
}

/// One block of cells on a ballot: a whole plurality contest, or one rank
/// position of a ranked contest (always `k = 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub id: String,
    pub contest: usize,
    pub rank: Option<usize>,
    pub candidates: usize,
    pub k: usize,
}

impl Section {
    /// Weight `(k+1)^j` of candidate `j`.
    pub fn weight(&self, candidate: usize) -> u64 {
        (self.k as u64 + 1).pow(candidate as u32)
    }

    /// All packed totals a well-formed cast can produce.
    pub fn valid_totals(&self) -> Vec<u64> {
        crate::tally::valid_set(self.candidates, self.k)
    }

    /// Weights a single cell may carry: 0 for abstentions, `(k+1)^j` for candidates.
    pub fn admissible_weights(&self) -> Vec<u64> {
        std::iter::once(0).chain((0..self.candidates).map(|j| self.weight(j))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFormat {
    pub shortcode_hex_chars: usize,
}

impl Default for CodeFormat {
    fn default() -> Self {
        CodeFormat { shortcode_hex_chars: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectionOptions {
    /// Per-ballot signing keys for dispute challenges.
    pub ballot_keys: bool,
    /// Print a ciphertext prefix under scratch beside each candidate.
    pub collection_accountability: bool,
    /// Cut-and-choose rounds per mix proof.
    pub mix_rounds: u32,
    /// Posts after a scratch notice or disclaimer during which grace spoiling is allowed.
    pub grace_window: u64,
    /// Posts after a challenge during which the authority may respond.
    pub dispute_window: u64,
    /// Instant-runoff tie rule; the only supported value is `lowest-index`.
    pub irv_tie_break: String,
}

impl Default for ElectionOptions {
    fn default() -> Self {
        ElectionOptions {
            ballot_keys: true,
            collection_accountability: true,
            mix_rounds: 40,
            grace_window: 1000,
            dispute_window: 1000,
            irv_tie_break: "lowest-index".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrusteeConfig {
    pub threshold: u32,
    pub trustees: u32,
}

impl Default for TrusteeConfig {
    fn default() -> Self {
        TrusteeConfig { threshold: 2, trustees: 3 }
    }
}

/// What an operator writes before key generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionConfig {
    pub election_id: String,
    pub contests: Vec<Contest>,
    #[serde(default)]
    pub trustees: TrusteeConfig,
    #[serde(default)]
    pub codes: CodeFormat,
    #[serde(default)]
    pub options: ElectionOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionManifest {
    pub election_id: String,
    pub contests: Vec<Contest>,
    pub group: Params,
    pub trustees: TrusteeKeys,
    pub codes: CodeFormat,
    pub options: ElectionOptions,
}

impl ElectionConfig {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut ids = BTreeSet::new();
        for c in &self.contests {
            if !ids.insert(c.id.as_str()) {
                return Err(ManifestError::DuplicateContest(c.id.clone()));
            }
            let err = |msg: &str| ManifestError::Contest(c.id.clone(), msg.into());
            if c.candidates.is_empty() {
                return Err(err("no candidates"));
            }
            let names: BTreeSet<_> = c.candidates.iter().collect();
            if names.len() != c.candidates.len() {
                return Err(err("candidate names must be unique"));
            }
            if c.id.contains('#') {
                return Err(err("'#' is reserved for rank sections"));
            }
            let k = match c.method {
                Method::Plurality { selections } => selections,
                Method::Irv { ranks } => {
                    if ranks == 0 || ranks > c.candidates.len() {
                        return Err(err("ranks must be between 1 and the candidate count"));
                    }
                    1
                }
            };
            if k == 0 {
                return Err(err("selection limit must be at least 1"));
            }
            // Packed totals must fit comfortably below the group order.
            let bits = (c.candidates.len() as f64) * ((k + 1) as f64).log2();
            if bits > 60.0 || c.candidates.len() > 24 {
                return Err(err("contest too large for exhaustive decoding"));
            }
        }
        if !(2..=64).contains(&self.codes.shortcode_hex_chars) {
            return Err(ManifestError::CodeFormat);
        }
        Ok(())
    }

    /// Generates group parameters and trustee keys.
    pub fn setup<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<(ElectionManifest, Vec<TrusteeShare>), ManifestError> {
        self.validate()?;
        let group = GroupParams::<Group>::setup(rng)?;
        let (trustees, shares) = keygen(&group, self.trustees.threshold, self.trustees.trustees, rng)?;
        let manifest = ElectionManifest {
            election_id: self.election_id.clone(),
            contests: self.contests.clone(),
            group,
            trustees,
            codes: self.codes.clone(),
            options: self.options.clone(),
        };
        Ok((manifest, shares))
    }
}

impl ElectionManifest {
    /// Ballot sections in canonical order.
    pub fn sections(&self) -> Vec<Section> {
        let mut out = Vec::new();
        for (ci, c) in self.contests.iter().enumerate() {
            match c.method {
                Method::Plurality { selections } => out.push(Section {
                    id: c.id.clone(),
                    contest: ci,
                    rank: None,
                    candidates: c.candidates.len(),
                    k: selections,
                }),
                Method::Irv { ranks } => out.extend((0..ranks).map(|r| Section {
                    id: format!("{}#{}", c.id, r + 1),
                    contest: ci,
                    rank: Some(r),
                    candidates: c.candidates.len(),
                    k: 1,
                })),
            }
        }
        out
    }

    pub fn section(&self, id: &str) -> Option<Section> {
        self.sections().into_iter().find(|s| s.id == id)
    }

    pub fn contest(&self, id: &str) -> Option<(usize, &Contest)> {
        self.contests.iter().enumerate().find(|(_, c)| c.id == id)
    }

    /// Sections belonging to contest index `ci`.
    pub fn contest_sections(&self, ci: usize) -> Vec<Section> {
        self.sections().into_iter().filter(|s| s.contest == ci).collect()
    }

    pub fn pk(&self) -> &crate::Element {
        &self.trustees.pk
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        ElectionConfig {
            election_id: self.election_id.clone(),
            contests: self.contests.clone(),
            trustees: TrusteeConfig { threshold: self.trustees.threshold, trustees: self.trustees.trustees },
            codes: self.codes.clone(),
            options: self.options.clone(),
        }
        .validate()?;
        self.group.validate()?;
        if !self.trustees.verify_dealing() {
            return Err(ManifestError::Keys(ElGamalError::BadThreshold {
                t: self.trustees.threshold,
                n: self.trustees.trustees,
            }));
        }
        Ok(())
    }
}
