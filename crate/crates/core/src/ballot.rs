//! Encrypted-ballot generation, code derivation, the seed key schedule, the
//! encrypted QR payload and the printed ballot forms.
//!
//! A ballot is fully determined by `(manifest, R, true randomness)`: the seed
//! `R` keys the ElGamal randomness stream and the QR encryption, and each cell
//! consumes one fresh 256-bit true-randomness string as its commitment
//! randomness. Regenerating from revealed values therefore reproduces every
//! commitment, shortcode and the longcode bit for bit.

use std::collections::BTreeSet;

use num_traits::Zero;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::{scalar_from_hash, Backend, GroupElement, ScalarField};
use crate::cce::commit_encrypt;
use crate::hash::{expand, tagged_hash, Bytes32, DIGEST_LEN};
use crate::manifest::ElectionManifest;
use crate::{Cell, Element, Group, Scalar};

/// Bytes of ciphertext encoding exposed as collection-accountability evidence.
pub const PARTIAL_LEN: usize = 16;
const MAX_REGENERATIONS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BallotError {
    #[error("seed must be 32 bytes, got {0}")]
    SeedLength(usize),
    #[error("true randomness source exhausted")]
    TrngExhausted,
    #[error("could not avoid a shortcode collision after {0} regenerations")]
    RetryLimit(usize),
    #[error("QR payload failed its integrity check")]
    TamperedPayload,
    #[error("QR payload length {0} is not a positive multiple of 32")]
    PayloadLength(usize),
}

/// The two independent keys derived from a ballot seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySchedule {
    pub elgamal_key: Bytes32,
    pub qr_key: Bytes32,
}

pub fn key_schedule(seed: &[u8]) -> Result<KeySchedule, BallotError> {
    if seed.len() != DIGEST_LEN {
        return Err(BallotError::SeedLength(seed.len()));
    }
    Ok(KeySchedule {
        elgamal_key: Bytes32::digest("rv/elg", &[seed]),
        qr_key: Bytes32::digest("rv/qr", &[seed]),
    })
}

/// The `index`-th raw output of the ElGamal randomness stream.
pub fn randomness_stream<B: Backend>(elgamal_key: &Bytes32, index: u64) -> B::Scalar {
    let mut data = elgamal_key.0.to_vec();
    data.extend(index.to_be_bytes());
    scalar_from_hash::<B>("rv/r", &data)
}

/// Consecutive non-zero stream outputs; zero outputs are skipped and recorded.
#[derive(Debug, Clone)]
pub struct RandomnessStream<B: Backend> {
    key: Bytes32,
    next: u64,
    pub skipped: Vec<u64>,
    _backend: std::marker::PhantomData<B>,
}

impl<B: Backend> RandomnessStream<B> {
    pub fn new(key: Bytes32) -> Self {
        RandomnessStream { key, next: 0, skipped: Vec::new(), _backend: std::marker::PhantomData }
    }

    pub fn next_scalar(&mut self) -> B::Scalar {
        loop {
            let idx = self.next;
            self.next += 1;
            let r = randomness_stream::<B>(&self.key, idx);
            if r.is_zero() {
                self.skipped.push(idx);
                continue;
            }
            return r;
        }
    }
}

/// Source of 256-bit true-randomness strings.
pub trait TrueRandomness {
    fn draw(&mut self) -> Result<Bytes32, BallotError>;
}

/// Draws from any RNG. The simulator feeds it a seeded generator.
pub struct RngTrng<'a, R: RngCore + ?Sized>(pub &'a mut R);

impl<R: RngCore + ?Sized> TrueRandomness for RngTrng<'_, R> {
    fn draw(&mut self) -> Result<Bytes32, BallotError> {
        Ok(Bytes32::random(self.0))
    }
}

/// Replays a fixed list, as when regenerating a ballot from revealed values.
pub struct ReplayTrng {
    values: std::vec::IntoIter<Bytes32>,
}

impl ReplayTrng {
    pub fn new(values: Vec<Bytes32>) -> Self {
        ReplayTrng { values: values.into_iter() }
    }
}

impl TrueRandomness for ReplayTrng {
    fn draw(&mut self) -> Result<Bytes32, BallotError> {
        self.values.next().ok_or(BallotError::TrngExhausted)
    }
}

/// Cells for one section, candidates in manifest order then abstentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionCells {
    pub section: String,
    pub candidates: Vec<Cell>,
    pub abstentions: Vec<Cell>,
    pub shortcodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedBallot {
    pub serial: u64,
    pub seed: Bytes32,
    pub sections: Vec<SectionCells>,
    pub longcode: Bytes32,
    /// One string per cell, in generation order.
    pub true_randomness: Vec<Bytes32>,
    /// Stream indices that produced a zero scalar.
    pub skipped: Vec<u64>,
}

/// Shortcode for a commitment: leading hex characters of its digest.
///
/// The candidate position is deliberately not an input, so a published
/// (commitment, shortcode) pair reveals nothing about which candidate it sits beside.
pub fn derive_shortcode(commitment: &Element, section: &str, hex_chars: usize) -> String {
    let digest = tagged_hash("rv/sc", &[section.as_bytes(), &commitment.encode()]);
    hex::encode(digest)[..hex_chars].to_string()
}

/// Builds the ballot deterministically from its seed and true randomness.
pub fn build_ballot(
    manifest: &ElectionManifest,
    serial: u64,
    seed: Bytes32,
    trng: &mut dyn TrueRandomness,
) -> Result<EncryptedBallot, BallotError> {
    let keys = key_schedule(&seed.0)?;
    let mut stream = RandomnessStream::<Group>::new(keys.elgamal_key);
    let pk = manifest.pk();
    let mut true_randomness = Vec::new();
    let mut cell = |m: u64| -> Result<Cell, BallotError> {
        let tr = trng.draw()?;
        true_randomness.push(tr);
        let s = Scalar::from_wide_bytes(&tr.0);
        Ok(commit_encrypt(&manifest.group, pk, m, s, stream.next_scalar()))
    };
    let mut sections = Vec::new();
    for sec in manifest.sections() {
        let candidates = (0..sec.candidates).map(|j| cell(sec.weight(j))).collect::<Result<Vec<_>, _>>()?;
        let abstentions = (0..sec.k).map(|_| cell(0)).collect::<Result<Vec<_>, _>>()?;
        sections.push(SectionCells { section: sec.id, candidates, abstentions, shortcodes: Vec::new() });
    }
    let mut ballot = EncryptedBallot {
        serial,
        seed,
        sections,
        longcode: Bytes32::ZERO,
        true_randomness,
        skipped: stream.skipped,
    };
    ballot.refresh_codes(manifest);
    Ok(ballot)
}

/// Draws a seed and fresh true randomness, regenerating on any
/// intra-section shortcode collision.
pub fn generate_encrypted_ballot(
    manifest: &ElectionManifest,
    serial: u64,
    trng: &mut dyn TrueRandomness,
) -> Result<EncryptedBallot, BallotError> {
    for _ in 0..MAX_REGENERATIONS {
        let seed = trng.draw()?;
        let ballot = build_ballot(manifest, serial, seed, trng)?;
        if !ballot.has_shortcode_collision() {
            return Ok(ballot);
        }
    }
    Err(BallotError::RetryLimit(MAX_REGENERATIONS))
}

impl EncryptedBallot {
    /// Recomputes shortcodes and longcode from the current commitments.
    pub fn refresh_codes(&mut self, manifest: &ElectionManifest) {
        let n = manifest.codes.shortcode_hex_chars;
        for s in &mut self.sections {
            s.shortcodes = s.candidates.iter().map(|c| derive_shortcode(&c.commitment, &s.section, n)).collect();
        }
        self.longcode = derive_longcode(&self.public_sections());
    }

    pub fn has_shortcode_collision(&self) -> bool {
        self.sections.iter().any(|s| {
            let set: BTreeSet<_> = s.shortcodes.iter().collect();
            set.len() != s.shortcodes.len()
        })
    }

    pub fn section(&self, id: &str) -> Option<&SectionCells> {
        self.sections.iter().find(|s| s.section == id)
    }

    /// Published view: per section, candidate cells and abstention cells each
    /// sorted by commitment encoding so position reveals nothing.
    pub fn public_sections(&self) -> Vec<PublicSection> {
        self.sections
            .iter()
            .map(|s| {
                let mut candidates: Vec<PublishedCell> = s
                    .candidates
                    .iter()
                    .zip(&s.shortcodes)
                    .map(|(c, code)| PublishedCell { commitment: c.commitment, shortcode: code.clone() })
                    .collect();
                candidates.sort_by_key(|c| c.commitment.encode());
                let mut abstentions: Vec<Element> = s.abstentions.iter().map(|c| c.commitment).collect();
                abstentions.sort_by_key(|c| c.encode());
                PublicSection { section: s.section.clone(), candidates, abstentions }
            })
            .collect()
    }

    /// Abstention cells in published (sorted) order.
    pub fn abstentions_in_public_order(&self, section: &str) -> Vec<Cell> {
        let Some(s) = self.section(section) else { return Vec::new() };
        let mut cells = s.abstentions.clone();
        cells.sort_by_key(|c| c.commitment.encode());
        cells
    }

    /// Index of the candidate whose shortcode is `code` in `section`.
    pub fn candidate_for_code(&self, section: &str, code: &str) -> Option<usize> {
        self.section(section)?.shortcodes.iter().position(|c| c == code)
    }

    pub fn cell_count(&self) -> usize {
        self.sections.iter().map(|s| s.candidates.len() + s.abstentions.len()).sum()
    }

    /// Leading ciphertext bytes of each candidate cell in `section`.
    pub fn partials(&self, section: &str) -> Vec<String> {
        self.section(section)
            .map(|s| s.candidates.iter().map(|c| partial_of(&c.ciphertext)).collect())
            .unwrap_or_default()
    }
}

/// Leading [`PARTIAL_LEN`] bytes of a ciphertext's canonical encoding, as hex.
pub fn partial_of(ct: &crate::Ciphertext) -> String {
    hex::encode(&ct.encode()[..PARTIAL_LEN])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedCell {
    pub commitment: Element,
    pub shortcode: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicSection {
    pub section: String,
    pub candidates: Vec<PublishedCell>,
    pub abstentions: Vec<Element>,
}

impl PublicSection {
    pub fn commitment_for_code(&self, code: &str) -> Option<&Element> {
        self.candidates.iter().find(|c| c.shortcode == code).map(|c| &c.commitment)
    }
}

/// Digest over all commitments in the order given (the published order is canonical).
pub fn derive_longcode(sections: &[PublicSection]) -> Bytes32 {
    let mut parts: Vec<Vec<u8>> = Vec::new();
    for s in sections {
        parts.push(s.section.as_bytes().to_vec());
        parts.push((s.candidates.len() as u64).to_be_bytes().to_vec());
        parts.extend(s.candidates.iter().map(|c| c.commitment.encode()));
        parts.push((s.abstentions.len() as u64).to_be_bytes().to_vec());
        parts.extend(s.abstentions.iter().map(|c| c.encode()));
    }
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    Bytes32::digest("rv/lc", &refs)
}

/// Combined id of a two-column ballot; `a` and `b` are the column labels fixed at pairing.
pub fn derive_pair_id(a: &Bytes32, b: &Bytes32) -> Bytes32 {
    Bytes32::digest("rv/id", &[&a.0, &b.0])
}

// ---------------------------------------------------------------------------
// QR payload
// ---------------------------------------------------------------------------

fn keystream(qr_key: &Bytes32, len: usize) -> Vec<u8> {
    expand("rv/qks", &[&qr_key.0], len)
}

/// Encrypts the true-randomness strings under the seed's QR key, followed by
/// a 32-byte integrity tag.
pub fn qr_payload(true_randomness: &[Bytes32], qr_key: &Bytes32) -> Vec<u8> {
    let plain: Vec<u8> = true_randomness.iter().flat_map(|b| b.0).collect();
    let mut ct: Vec<u8> = plain.iter().zip(keystream(qr_key, plain.len())).map(|(p, k)| p ^ k).collect();
    let tag = tagged_hash("rv/qtag", &[&qr_key.0, &ct]);
    ct.extend_from_slice(&tag);
    ct
}

pub fn qr_decrypt(payload: &[u8], qr_key: &Bytes32) -> Result<Vec<Bytes32>, BallotError> {
    if payload.len() < DIGEST_LEN || !payload.len().is_multiple_of(DIGEST_LEN) {
        return Err(BallotError::PayloadLength(payload.len()));
    }
    let (ct, tag) = payload.split_at(payload.len() - DIGEST_LEN);
    if tagged_hash("rv/qtag", &[&qr_key.0, ct]) != tag {
        return Err(BallotError::TamperedPayload);
    }
    let plain: Vec<u8> = ct.iter().zip(keystream(qr_key, ct.len())).map(|(c, k)| c ^ k).collect();
    Ok(plain.chunks(DIGEST_LEN).map(|c| Bytes32::from_slice(c).expect("chunk of 32")).collect())
}

// ---------------------------------------------------------------------------
// Printed forms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotForm {
    RemoteVotePair,
    SafeVote,
    Hybrid,
}

impl BallotForm {
    pub fn columns(self) -> usize {
        match self {
            BallotForm::SafeVote => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedRow {
    pub candidate: String,
    /// One shortcode per column.
    pub codes: Vec<String>,
    /// Scratch-concealed ciphertext prefixes, one per column, when enabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedSection {
    pub section: String,
    pub rows: Vec<PrintedRow>,
}

/// A scratch-off panel concealing one column's seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScratchPanel {
    pub seed: Bytes32,
    pub intact: bool,
}

/// Whether the seed under a panel has been exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScratchState {
    pub intact: bool,
    pub revealed_seed: Option<Bytes32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedBallot {
    pub form: BallotForm,
    pub ballot_id: Bytes32,
    /// Longcode of each column's encrypted ballot.
    pub column_ids: Vec<Bytes32>,
    pub sections: Vec<PrintedSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scratch: Vec<ScratchPanel>,
    /// Encrypted true randomness, one payload per scratch panel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qr: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signing_key: Option<Scalar>,
}

impl PrintedBallot {
    /// Lays out one or two encrypted ballots as a physical ballot.
    pub fn print(
        manifest: &ElectionManifest,
        form: BallotForm,
        columns: &[&EncryptedBallot],
        signing_key: Option<Scalar>,
    ) -> Self {
        assert_eq!(columns.len(), form.columns(), "column count does not match the form");
        let ballot_id = match form {
            BallotForm::SafeVote => columns[0].longcode,
            _ => derive_pair_id(&columns[0].longcode, &columns[1].longcode),
        };
        let partials = manifest.options.collection_accountability;
        let sections = manifest
            .sections()
            .iter()
            .map(|sec| {
                let contest = &manifest.contests[sec.contest];
                let rows = (0..sec.candidates)
                    .map(|j| PrintedRow {
                        candidate: contest.candidates[j].clone(),
                        codes: columns.iter().map(|b| b.section(&sec.id).unwrap().shortcodes[j].clone()).collect(),
                        partials: if partials {
                            columns.iter().map(|b| b.partials(&sec.id)[j].clone()).collect()
                        } else {
                            Vec::new()
                        },
                    })
                    .collect();
                PrintedSection { section: sec.id.clone(), rows }
            })
            .collect();
        let scratched_columns: Vec<&EncryptedBallot> = match form {
            BallotForm::RemoteVotePair => Vec::new(),
            _ => columns.to_vec(),
        };
        PrintedBallot {
            form,
            ballot_id,
            column_ids: columns.iter().map(|b| b.longcode).collect(),
            sections,
            scratch: scratched_columns.iter().map(|b| ScratchPanel { seed: b.seed, intact: true }).collect(),
            qr: scratched_columns
                .iter()
                .map(|b| hex::encode(qr_payload(&b.true_randomness, &key_schedule(&b.seed.0).unwrap().qr_key)))
                .collect(),
            signing_key,
        }
    }

    /// Removes the scratch surface over `column` and returns the seed beneath.
    pub fn scratch_off(&mut self, column: usize) -> Option<Bytes32> {
        let panel = self.scratch.get_mut(column)?;
        panel.intact = false;
        Some(panel.seed)
    }

    pub fn scratch_state(&self, column: usize) -> ScratchState {
        match self.scratch.get(column) {
            Some(p) if !p.intact => ScratchState { intact: false, revealed_seed: Some(p.seed) },
            _ => ScratchState { intact: true, revealed_seed: None },
        }
    }

    pub fn any_scratched(&self) -> bool {
        self.scratch.iter().any(|p| !p.intact)
    }

    pub fn section(&self, id: &str) -> Option<&PrintedSection> {
        self.sections.iter().find(|s| s.section == id)
    }

    /// Printed code for `candidate` in `column`.
    pub fn code(&self, section: &str, candidate: usize, column: usize) -> Option<&str> {
        self.section(section)?.rows.get(candidate)?.codes.get(column).map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Dlog;
    use crate::testutil::{manifest, seeded};

    #[test]
    fn key_schedule_cases() {
        let r = [7u8; 32];
        assert_eq!(key_schedule(&r).unwrap(), key_schedule(&r).unwrap());
        let other = key_schedule(&[8u8; 32]).unwrap();
        assert_ne!(key_schedule(&r).unwrap().elgamal_key, other.elgamal_key);
        assert_ne!(other.elgamal_key, other.qr_key);
        assert!(key_schedule(&[0u8; 32]).is_ok());
        assert_eq!(key_schedule(&[0u8; 31]).unwrap_err(), BallotError::SeedLength(31));
    }

    #[test]
    fn key_schedule_reference_digest() {
        let ks = key_schedule(&[0u8; 32]).unwrap();
        assert_eq!(ks.elgamal_key.0, tagged_hash("rv/elg", &[&[0u8; 32]]));
        assert_eq!(ks.qr_key.0, tagged_hash("rv/qr", &[&[0u8; 32]]));
    }

    #[test]
    fn stream_indices_are_distinct_and_replayable() {
        let key = Bytes32::digest("k", &[]);
        let a = randomness_stream::<Group>(&key, 0);
        let b = randomness_stream::<Group>(&key, 1);
        assert_ne!(a, b);
        assert_eq!(a, randomness_stream::<Group>(&key, 0));
    }

    #[test]
    fn stream_skips_zero_outputs() {
        // In a group of order 2 about half the raw outputs are zero.
        let key = Bytes32::digest("tiny", &[]);
        let mut stream = RandomnessStream::<Dlog<2>>::new(key);
        let outputs: Vec<_> = (0..20).map(|_| stream.next_scalar()).collect();
        assert!(outputs.iter().all(|s| !s.is_zero()));
        assert!(!stream.skipped.is_empty());
        for idx in &stream.skipped {
            assert!(randomness_stream::<Dlog<2>>(&key, *idx).is_zero());
        }
    }

    #[test]
    fn cell_layout_and_weights() {
        let (m, _) = manifest();
        let mut rng = seeded(1);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        // mayor: 3 candidates k=1 -> weights 1,2,4 + 1 abstention
        let mayor = b.section("mayor").unwrap();
        let weights: Vec<u64> = mayor.candidates.iter().map(|c| c.opening.unwrap().m).collect();
        assert_eq!(weights, [1, 2, 4]);
        assert_eq!(mayor.abstentions.len(), 1);
        let approval = b.section("board").unwrap();
        let weights: Vec<u64> = approval.candidates.iter().map(|c| c.opening.unwrap().m).collect();
        assert_eq!(weights, [1, 3, 9]);
        assert_eq!(approval.abstentions.len(), 2);
        assert!(approval.abstentions.iter().all(|c| c.opening.unwrap().m == 0));
        assert_eq!(b.true_randomness.len(), b.cell_count());
    }

    #[test]
    fn replay_reproduces_ballot_bit_for_bit() {
        let (m, _) = manifest();
        let mut rng = seeded(2);
        let b = generate_encrypted_ballot(&m, 5, &mut RngTrng(&mut rng)).unwrap();
        let again = build_ballot(&m, 5, b.seed, &mut ReplayTrng::new(b.true_randomness.clone())).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&b).unwrap());
        let short = build_ballot(&m, 5, b.seed, &mut ReplayTrng::new(b.true_randomness[..3].to_vec()));
        assert_eq!(short.unwrap_err(), BallotError::TrngExhausted);
    }

    #[test]
    fn shortcode_properties() {
        let (m, _) = manifest();
        let mut rng = seeded(3);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let c = b.sections[0].candidates[0].commitment;
        let code = derive_shortcode(&c, "mayor", 4);
        assert_eq!(code.len(), 4);
        assert_eq!(code, derive_shortcode(&c, "mayor", 4));
        assert_eq!(code, hex::encode(tagged_hash("rv/sc", &[b"mayor", &c.encode()]))[..4]);
        let changed = c * m.group.g2;
        assert_ne!(tagged_hash("rv/sc", &[b"mayor", &changed.encode()]), tagged_hash("rv/sc", &[b"mayor", &c.encode()]));
        assert_ne!(
            tagged_hash("rv/sc", &[b"mayor", &c.encode()]),
            tagged_hash("rv/sc", &[b"board", &c.encode()])
        );
    }

    #[test]
    fn longcode_binds_every_commitment_and_order() {
        let (m, _) = manifest();
        let mut rng = seeded(4);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let face = b.public_sections();
        assert_eq!(derive_longcode(&face), b.longcode);
        let mut permuted = face.clone();
        permuted[0].candidates.swap(0, 1);
        assert_ne!(derive_longcode(&permuted), b.longcode);
        let mut tampered = b.clone();
        tampered.sections[1].abstentions[0].commitment = tampered.sections[1].abstentions[0].commitment * m.group.g2;
        tampered.refresh_codes(&m);
        assert_ne!(tampered.longcode, b.longcode);
    }

    #[test]
    fn pair_id_is_label_ordered() {
        let a = Bytes32::digest("a", &[]);
        let b = Bytes32::digest("b", &[]);
        assert_ne!(derive_pair_id(&a, &b), derive_pair_id(&b, &a));
        assert_eq!(derive_pair_id(&a, &b).0, tagged_hash("rv/id", &[&a.0, &b.0]));
    }

    #[test]
    fn generated_ballots_have_unique_codes_per_section() {
        let (m, _) = manifest();
        let mut rng = seeded(5);
        for serial in 0..50 {
            let b = generate_encrypted_ballot(&m, serial, &mut RngTrng(&mut rng)).unwrap();
            assert!(!b.has_shortcode_collision());
        }
    }

    #[test]
    fn qr_roundtrip_tamper_and_length() {
        let mut rng = seeded(6);
        let values: Vec<Bytes32> = (0..9).map(|_| Bytes32::random(&mut rng)).collect();
        let key = Bytes32::random(&mut rng);
        let payload = qr_payload(&values, &key);
        assert_eq!(payload.len(), 32 * 9 + 32);
        assert_eq!(qr_decrypt(&payload, &key).unwrap(), values);
        for bit in [0usize, 100, 8 * 32 * 9 + 3] {
            let mut t = payload.clone();
            t[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(qr_decrypt(&t, &key).unwrap_err(), BallotError::TamperedPayload);
        }
        assert_eq!(qr_decrypt(&payload, &Bytes32::ZERO).unwrap_err(), BallotError::TamperedPayload);
        assert_eq!(qr_decrypt(&payload[1..], &key).unwrap_err(), BallotError::PayloadLength(payload.len() - 1));
    }

    #[test]
    fn printed_forms() {
        let (m, _) = manifest();
        let mut rng = seeded(7);
        let a = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let b = generate_encrypted_ballot(&m, 1, &mut RngTrng(&mut rng)).unwrap();
        let safe = PrintedBallot::print(&m, BallotForm::SafeVote, &[&a], None);
        assert_eq!(safe.ballot_id, a.longcode);
        assert!(safe.sections.iter().all(|s| s.rows.iter().all(|r| r.codes.len() == 1)));
        assert_eq!(safe.scratch.len(), 1);
        assert_eq!(safe.qr.len(), 1);
        let pair = PrintedBallot::print(&m, BallotForm::RemoteVotePair, &[&a, &b], None);
        assert_eq!(pair.ballot_id, derive_pair_id(&a.longcode, &b.longcode));
        assert!(pair.sections.iter().all(|s| s.rows.iter().all(|r| r.codes.len() == 2)));
        assert!(pair.scratch.is_empty() && pair.qr.is_empty());
        let mut hybrid = PrintedBallot::print(&m, BallotForm::Hybrid, &[&a, &b], None);
        assert_eq!(hybrid.scratch.len(), 2);
        assert!(hybrid.scratch_state(1).intact);
        assert_eq!(hybrid.scratch_off(1), Some(b.seed));
        assert_eq!(hybrid.scratch_state(1), ScratchState { intact: false, revealed_seed: Some(b.seed) });
        assert!(hybrid.any_scratched());
    }
}
