//! Collection accountability: partial-ciphertext evidence, signed
//! challenges, the authority's validity proof, adjudication, and the hybrid
//! ballot's state machine.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::{scalar_from_hash, GroupElement, ScalarField};
use crate::ballot::PARTIAL_LEN;
use crate::board::{BoardIndex, ChallengeRecord, ResponseRecord};
use crate::cce::Opening;
use crate::hash::{tagged_hash, Bytes32};
use crate::manifest::ElectionManifest;
use crate::remotevote::Column;
use crate::{Ciphertext, Element, Params, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DisputeError {
    #[error("partial must be {PARTIAL_LEN} bytes of hex")]
    MalformedPartial,
    #[error("no receipt for this ballot")]
    NoReceipt,
    #[error("the code is already on the receipt")]
    CodeOnReceipt,
    #[error("unknown section {0}")]
    UnknownSection(String),
    #[error("code does not name a published cell of the cast column")]
    UnknownCode,
    #[error("a signature is required")]
    MissingSignature,
    #[error("signature does not verify")]
    BadSignature,
    #[error("dispute window closed")]
    WindowClosed,
    #[error("results are already posted")]
    AfterResults,
}

/// What a voter saw under the scratch surface beside their selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialEvidence {
    pub ballot_id: Bytes32,
    pub section: String,
    pub candidate: usize,
    pub shortcode: String,
    /// Hex of the leading ciphertext bytes.
    pub partial: String,
}

impl PartialEvidence {
    pub fn well_formed(&self) -> bool {
        hex::decode(&self.partial).is_ok_and(|b| b.len() == PARTIAL_LEN)
    }

    /// Bytes a ballot key signs.
    pub fn message(&self) -> [u8; 32] {
        tagged_hash(
            "rv/evidence",
            &[
                &self.ballot_id.0,
                self.section.as_bytes(),
                &(self.candidate as u64).to_be_bytes(),
                self.shortcode.as_bytes(),
                self.partial.as_bytes(),
            ],
        )
    }
}

// ---------------------------------------------------------------------------
// Ballot keys
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotKeypair {
    pub secret: Scalar,
    pub verification_key: Element,
}

impl BallotKeypair {
    pub fn from_secret(params: &Params, secret: Scalar) -> Self {
        BallotKeypair { secret, verification_key: params.g1.pow(&secret) }
    }

    pub fn generate<R: RngCore + ?Sized>(params: &Params, rng: &mut R) -> Self {
        Self::from_secret(params, Scalar::random(rng))
    }
}

/// Schnorr signature over G1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub commit: Element,
    pub response: Scalar,
}

fn sig_challenge(vk: &Element, commit: &Element, msg: &[u8]) -> Scalar {
    let mut data = vk.encode();
    data.extend(commit.encode());
    data.extend(msg);
    scalar_from_hash::<crate::Group>("rv/sig", &data)
}

pub fn sign(params: &Params, key: &BallotKeypair, msg: &[u8]) -> Signature {
    let mut nonce_in = key.secret.to_bytes();
    nonce_in.extend(msg);
    let w = scalar_from_hash::<crate::Group>("rv/sig/nonce", &nonce_in);
    let commit = params.g1.pow(&w);
    let e = sig_challenge(&key.verification_key, &commit, msg);
    Signature { commit, response: w + e * key.secret }
}

pub fn verify_signature(params: &Params, vk: &Element, msg: &[u8], sig: &Signature) -> bool {
    let e = sig_challenge(vk, &sig.commit, msg);
    params.g1.pow(&sig.response) == sig.commit * vk.pow(&e)
}

// ---------------------------------------------------------------------------
// Validity proof
// ---------------------------------------------------------------------------

/// One branch of the disjunction: knowledge of `(s, r)` with
/// `C / h2^m = g2^s`, `c1 = g1^r`, `c2 = pk^r · g1^s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityBranch {
    pub t_commit: Element,
    pub t_c1: Element,
    pub t_c2: Element,
    pub challenge: Scalar,
    pub z_s: Scalar,
    pub z_r: Scalar,
}

/// Disjunctive proof that a revealed ciphertext is consistent with its
/// commitment and that the committed weight lies in the admissible set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityProof {
    pub branches: Vec<ValidityBranch>,
}

struct Statement<'a> {
    params: &'a Params,
    pk: &'a Element,
    commitment: &'a Element,
    ct: &'a Ciphertext,
}

impl Statement<'_> {
    fn target(&self, m: u64) -> Element {
        self.commitment.div(&self.params.h2.pow(&Scalar::from_u64(m)))
    }

    fn fs_challenge(&self, admissible: &[u64], branches: &[(Element, Element, Element)]) -> Scalar {
        let mut data = Vec::new();
        for e in [self.pk, self.commitment, &self.ct.c1, &self.ct.c2] {
            data.extend(e.encode());
        }
        for m in admissible {
            data.extend(m.to_be_bytes());
        }
        for (a, b, c) in branches {
            data.extend(a.encode());
            data.extend(b.encode());
            data.extend(c.encode());
        }
        scalar_from_hash::<crate::Group>("rv/valid", &data)
    }

    fn simulate(&self, m: u64, e: Scalar, z_s: Scalar, z_r: Scalar) -> (Element, Element, Element) {
        let p = self.params;
        let t_commit = p.g2.pow(&z_s).div(&self.target(m).pow(&e));
        let t_c1 = p.g1.pow(&z_r).div(&self.ct.c1.pow(&e));
        let t_c2 = (self.pk.pow(&z_r) * p.g1.pow(&z_s)).div(&self.ct.c2.pow(&e));
        (t_commit, t_c1, t_c2)
    }
}

pub fn prove_validity<R: RngCore + ?Sized>(
    params: &Params,
    pk: &Element,
    commitment: &Element,
    ct: &Ciphertext,
    opening: &Opening<crate::Group>,
    admissible: &[u64],
    rng: &mut R,
) -> Option<ValidityProof> {
    let real = admissible.iter().position(|&m| m == opening.m)?;
    let st = Statement { params, pk, commitment, ct };
    let mut sims = Vec::with_capacity(admissible.len());
    let mut ts = Vec::with_capacity(admissible.len());
    let (a, b) = (Scalar::random(rng), Scalar::random(rng));
    for (i, &m) in admissible.iter().enumerate() {
        if i == real {
            sims.push((Scalar::from_u64(0), Scalar::from_u64(0), Scalar::from_u64(0)));
            ts.push((params.g2.pow(&a), params.g1.pow(&b), pk.pow(&b) * params.g1.pow(&a)));
        } else {
            let (e, zs, zr) = (Scalar::random(rng), Scalar::random(rng), Scalar::random(rng));
            sims.push((e, zs, zr));
            ts.push(st.simulate(m, e, zs, zr));
        }
    }
    let total = st.fs_challenge(admissible, &ts);
    let others = sims.iter().enumerate().filter(|(i, _)| *i != real).fold(Scalar::from_u64(0), |acc, (_, s)| acc + s.0);
    let e_real = total - others;
    sims[real] = (e_real, a + e_real * opening.s, b + e_real * opening.r);
    let branches = ts
        .into_iter()
        .zip(sims)
        .map(|((t_commit, t_c1, t_c2), (challenge, z_s, z_r))| ValidityBranch { t_commit, t_c1, t_c2, challenge, z_s, z_r })
        .collect();
    Some(ValidityProof { branches })
}

pub fn verify_validity(
    params: &Params,
    pk: &Element,
    commitment: &Element,
    ct: &Ciphertext,
    admissible: &[u64],
    proof: &ValidityProof,
) -> bool {
    if proof.branches.len() != admissible.len() || admissible.is_empty() {
        return false;
    }
    let st = Statement { params, pk, commitment, ct };
    let ts: Vec<_> = proof.branches.iter().map(|b| (b.t_commit, b.t_c1, b.t_c2)).collect();
    let sum = proof.branches.iter().fold(Scalar::from_u64(0), |acc, b| acc + b.challenge);
    if sum != st.fs_challenge(admissible, &ts) {
        return false;
    }
    proof
        .branches
        .iter()
        .zip(admissible)
        .all(|(b, &m)| st.simulate(m, b.challenge, b.z_s, b.z_r) == (b.t_commit, b.t_c1, b.t_c2))
}

// ---------------------------------------------------------------------------
// Challenge and adjudication
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    VoterProven,
    AuthorityVindicated,
    ResponseInvalid,
}

/// The cast column and its published commitment for the disputed code.
fn disputed_cell(manifest: &ElectionManifest, index: &BoardIndex, ev: &PartialEvidence) -> Result<(Bytes32, Element), DisputeError> {
    manifest.section(&ev.section).ok_or_else(|| DisputeError::UnknownSection(ev.section.clone()))?;
    let receipt = index.receipts_for(&ev.ballot_id).into_iter().next().ok_or(DisputeError::NoReceipt)?;
    if receipt.codes.get(&ev.section).is_some_and(|c| c.contains(&ev.shortcode)) {
        return Err(DisputeError::CodeOnReceipt);
    }
    let publication = index.publication(&receipt.column).ok_or(DisputeError::UnknownCode)?;
    let commitment = publication
        .sections
        .iter()
        .find(|s| s.section == ev.section)
        .and_then(|s| s.commitment_for_code(&ev.shortcode))
        .ok_or(DisputeError::UnknownCode)?;
    Ok((receipt.column, *commitment))
}

/// Checks a challenge against the board before it is posted.
pub fn file_challenge(
    manifest: &ElectionManifest,
    index: &BoardIndex,
    evidence: PartialEvidence,
    signature: Option<Signature>,
) -> Result<ChallengeRecord, DisputeError> {
    if !evidence.well_formed() {
        return Err(DisputeError::MalformedPartial);
    }
    disputed_cell(manifest, index, &evidence)?;
    if manifest.options.ballot_keys {
        let vk = index.verification_key(&evidence.ballot_id);
        match (vk, &signature) {
            (Some(vk), Some(sig)) => {
                if !verify_signature(&manifest.group, &vk, &evidence.message(), sig) {
                    return Err(DisputeError::BadSignature);
                }
            }
            (Some(_), None) => return Err(DisputeError::MissingSignature),
            (None, _) => {}
        }
    }
    Ok(ChallengeRecord { evidence, signature })
}

/// Pure function of the two posted records and the public board.
pub fn adjudicate(manifest: &ElectionManifest, index: &BoardIndex, challenge: &ChallengeRecord, response: &ResponseRecord) -> Verdict {
    let ev = &challenge.evidence;
    let Ok((_, commitment)) = disputed_cell(manifest, index, ev) else {
        return Verdict::AuthorityVindicated;
    };
    let Some(section) = manifest.section(&ev.section) else {
        return Verdict::AuthorityVindicated;
    };
    let valid = response.proof.as_ref().is_some_and(|p| {
        verify_validity(&manifest.group, manifest.pk(), &commitment, &response.ciphertext, &section.admissible_weights(), p)
    });
    if !valid {
        return Verdict::ResponseInvalid;
    }
    let revealed = hex::encode(&response.ciphertext.encode()[..PARTIAL_LEN]);
    if revealed == ev.partial.to_lowercase() {
        Verdict::VoterProven
    } else {
        Verdict::AuthorityVindicated
    }
}

// ---------------------------------------------------------------------------
// Hybrid ballot
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HybridAction {
    BeaconSpoil(Column),
    Scratch(Column),
    Cast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HybridOutcome {
    Pending,
    /// Cast normally from the named column.
    Cast(Column),
    /// Cast column was scratched; the marks go to the duplication team.
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HybridError {
    #[error("the beacon has already spoiled a column")]
    AlreadySpoiled,
    #[error("cannot cast before the beacon spoils a column")]
    NotSpoiled,
    #[error("ballot already cast")]
    AlreadyCast,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridState {
    pub beacon_spoiled: Option<Column>,
    pub scratched: [bool; 2],
    pub outcome: Option<HybridOutcome>,
}

impl HybridState {
    pub fn apply(&mut self, action: HybridAction) -> Result<HybridOutcome, HybridError> {
        if self.outcome.is_some() {
            return Err(HybridError::AlreadyCast);
        }
        match action {
            HybridAction::BeaconSpoil(c) => {
                if self.beacon_spoiled.is_some() {
                    return Err(HybridError::AlreadySpoiled);
                }
                self.beacon_spoiled = Some(c);
                Ok(HybridOutcome::Pending)
            }
            HybridAction::Scratch(c) => {
                self.scratched[c.index()] = true;
                Ok(HybridOutcome::Pending)
            }
            HybridAction::Cast => {
                let spoiled = self.beacon_spoiled.ok_or(HybridError::NotSpoiled)?;
                let live = spoiled.other();
                let out = if self.scratched[live.index()] { HybridOutcome::Duplicate } else { HybridOutcome::Cast(live) };
                self.outcome = Some(out);
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cce::commit_encrypt;
    use crate::testutil::{manifest, seeded};

    #[test]
    fn signatures() {
        let (m, _) = manifest();
        let mut rng = seeded(21);
        let key = BallotKeypair::generate(&m.group, &mut rng);
        let sig = sign(&m.group, &key, b"hello");
        assert!(verify_signature(&m.group, &key.verification_key, b"hello", &sig));
        assert!(!verify_signature(&m.group, &key.verification_key, b"hellp", &sig));
        assert_eq!(sig, sign(&m.group, &key, b"hello"));
        let mut wrong = 0;
        for _ in 0..1000 {
            let other = BallotKeypair::generate(&m.group, &mut rng);
            let forged = sign(&m.group, &other, b"hello");
            if !verify_signature(&m.group, &key.verification_key, b"hello", &forged) {
                wrong += 1;
            }
        }
        assert_eq!(wrong, 1000);
    }

    #[test]
    fn validity_proof_complete_and_sound() {
        let (m, _) = manifest();
        let mut rng = seeded(22);
        let admissible = [0, 1, 3, 9];
        for &w in &admissible {
            let cell = commit_encrypt(&m.group, m.pk(), w, Scalar::random(&mut rng), Scalar::random(&mut rng));
            let op = cell.opening.unwrap();
            let proof = prove_validity(&m.group, m.pk(), &cell.commitment, &cell.ciphertext, &op, &admissible, &mut rng).unwrap();
            assert!(verify_validity(&m.group, m.pk(), &cell.commitment, &cell.ciphertext, &admissible, &proof));
            // a different ciphertext is not consistent with the commitment
            let other = commit_encrypt(&m.group, m.pk(), w, Scalar::random(&mut rng), Scalar::random(&mut rng));
            assert!(!verify_validity(&m.group, m.pk(), &cell.commitment, &other.ciphertext, &admissible, &proof));
            let mut bad = proof.clone();
            bad.branches[0].z_s = bad.branches[0].z_s + Scalar::from_u64(1);
            assert!(!verify_validity(&m.group, m.pk(), &cell.commitment, &cell.ciphertext, &admissible, &bad));
        }
        // weight outside the set has no proof
        let cell = commit_encrypt(&m.group, m.pk(), 2, Scalar::random(&mut rng), Scalar::random(&mut rng));
        assert!(prove_validity(&m.group, m.pk(), &cell.commitment, &cell.ciphertext, &cell.opening.unwrap(), &admissible, &mut rng).is_none());
    }

    #[test]
    fn evidence_format() {
        let ev = PartialEvidence {
            ballot_id: Bytes32::ZERO,
            section: "mayor".into(),
            candidate: 0,
            shortcode: "abcd".into(),
            partial: "00".repeat(PARTIAL_LEN),
        };
        assert!(ev.well_formed());
        assert!(!PartialEvidence { partial: "00".repeat(PARTIAL_LEN - 1), ..ev.clone() }.well_formed());
        assert!(!PartialEvidence { partial: "zz".repeat(PARTIAL_LEN), ..ev }.well_formed());
    }

    #[test]
    fn hybrid_transitions() {
        let mut s = HybridState::default();
        assert_eq!(s.apply(HybridAction::Cast), Err(HybridError::NotSpoiled));
        s.apply(HybridAction::BeaconSpoil(Column::A)).unwrap();
        assert_eq!(s.clone().apply(HybridAction::Cast), Ok(HybridOutcome::Cast(Column::B)));
        s.apply(HybridAction::Scratch(Column::B)).unwrap();
        assert_eq!(s.apply(HybridAction::Cast), Ok(HybridOutcome::Duplicate));
        assert_eq!(s.apply(HybridAction::Cast), Err(HybridError::AlreadyCast));
        let mut t = HybridState::default();
        t.apply(HybridAction::BeaconSpoil(Column::B)).unwrap();
        t.apply(HybridAction::Scratch(Column::B)).unwrap();
        assert_eq!(t.apply(HybridAction::Cast), Ok(HybridOutcome::Cast(Column::A)));
    }
}
