//! Paired-column ballots audited by a public beacon.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ballot::{build_ballot, EncryptedBallot, PrintedBallot, ReplayTrng};
use crate::board::{BallotPublication, BoardIndex, SpoilReveal};
use crate::hash::{tagged_hash, Bytes32};
use crate::manifest::ElectionManifest;

/// How far ahead the greedy pairing looks for a collision-free partner.
const PAIR_SEARCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Column {
    A,
    B,
}

impl Column {
    pub fn index(self) -> usize {
        match self {
            Column::A => 0,
            Column::B => 1,
        }
    }

    pub fn other(self) -> Column {
        match self {
            Column::A => Column::B,
            Column::B => Column::A,
        }
    }

    pub fn from_index(i: usize) -> Column {
        if i == 0 {
            Column::A
        } else {
            Column::B
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RemoteVoteError {
    #[error("cannot pair an odd number of ballots")]
    OddCount,
    #[error("no collision-free partner for ballot at position {0}")]
    NoPairing(usize),
    #[error("column {0:?} is not the one the beacon selects")]
    WrongColumn(Column),
}

/// Whether two ballots share any shortcode within a section.
pub fn collides(a: &EncryptedBallot, b: &EncryptedBallot) -> bool {
    a.sections.iter().any(|sa| {
        b.section(&sa.section).is_some_and(|sb| {
            let codes: BTreeSet<&String> = sa.shortcodes.iter().collect();
            sb.shortcodes.iter().any(|c| codes.contains(c))
        })
    })
}

/// Greedy pairing; each ballot takes the first later ballot it does not collide with.
/// Returns the pairs and the positions left unpaired.
pub fn pair_greedy(ballots: &[&EncryptedBallot]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut used = vec![false; ballots.len()];
    let mut pairs = Vec::new();
    let mut left = Vec::new();
    for i in 0..ballots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let partner = (i + 1..ballots.len())
            .filter(|&j| !used[j])
            .take(PAIR_SEARCH)
            .find(|&j| !collides(ballots[i], ballots[j]));
        match partner {
            Some(j) => {
                used[j] = true;
                pairs.push((i, j));
            }
            None => left.push(i),
        }
    }
    (pairs, left)
}

pub fn pair_ballots(ballots: &[&EncryptedBallot]) -> Result<Vec<(usize, usize)>, RemoteVoteError> {
    if ballots.len() % 2 == 1 {
        return Err(RemoteVoteError::OddCount);
    }
    let (pairs, left) = pair_greedy(ballots);
    match left.first() {
        Some(&i) => Err(RemoteVoteError::NoPairing(i)),
        None => Ok(pairs),
    }
}

/// Lowest bit of the beacon-keyed digest of the ballot id: 0 spoils A, 1 spoils B.
pub fn select_spoil_column(beacon: &[u8], ballot_id: &Bytes32) -> Column {
    let h = tagged_hash("rv/spoil", &[beacon, &ballot_id.0]);
    if h[31] & 1 == 0 {
        Column::A
    } else {
        Column::B
    }
}

/// Builds the reveal for `column`, refusing any column but the beacon's choice.
pub fn publish_spoil(
    ballot_id: Bytes32,
    column: Column,
    beacon: &[u8],
    ballot: &EncryptedBallot,
) -> Result<SpoilReveal, RemoteVoteError> {
    if column != select_spoil_column(beacon, &ballot_id) {
        return Err(RemoteVoteError::WrongColumn(column));
    }
    Ok(reveal_of(ballot_id, column, ballot))
}

/// The reveal record for a column, without any policy check.
pub fn reveal_of(ballot_id: Bytes32, column: Column, ballot: &EncryptedBallot) -> SpoilReveal {
    SpoilReveal {
        ballot_id,
        column,
        longcode: ballot.longcode,
        seed: ballot.seed,
        true_randomness: ballot.true_randomness.clone(),
        skipped: ballot.skipped.clone(),
    }
}

/// Where a regenerated column departs from its publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeryEvidence {
    pub ballot_id: Bytes32,
    pub column: Column,
    /// Sections whose published cells differ from the regeneration.
    pub sections: Vec<String>,
    pub reason: String,
}

/// Regenerates a revealed column and compares it against its publication.
pub fn check_reveal(
    manifest: &ElectionManifest,
    reveal: &SpoilReveal,
    publication: &BallotPublication,
) -> Result<EncryptedBallot, ForgeryEvidence> {
    let evidence = |sections: Vec<String>, reason: &str| ForgeryEvidence {
        ballot_id: reveal.ballot_id,
        column: reveal.column,
        sections,
        reason: reason.into(),
    };
    let regenerated = build_ballot(manifest, 0, reveal.seed, &mut ReplayTrng::new(reveal.true_randomness.clone()))
        .map_err(|e| evidence(Vec::new(), &e.to_string()))?;
    if regenerated.true_randomness.len() != reveal.true_randomness.len() {
        return Err(evidence(Vec::new(), "revealed randomness has the wrong length"));
    }
    let face = regenerated.public_sections();
    let differing: Vec<String> = face
        .iter()
        .filter(|s| publication.sections.iter().find(|p| p.section == s.section) != Some(s))
        .map(|s| s.section.clone())
        .collect();
    if !differing.is_empty() || publication.sections.len() != face.len() {
        return Err(evidence(differing, "regenerated cells differ from the publication"));
    }
    if regenerated.longcode != publication.longcode || regenerated.longcode != reveal.longcode {
        return Err(evidence(Vec::new(), "longcode mismatch"));
    }
    if regenerated.skipped != reveal.skipped {
        return Err(evidence(Vec::new(), "skip list mismatch"));
    }
    Ok(regenerated)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRow {
    pub candidate: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSection {
    pub section: String,
    pub rows: Vec<ImageRow>,
}

/// Expected codes of the spoiled column, beside the candidate names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialImage {
    pub ballot_id: Bytes32,
    pub column: Column,
    pub sections: Vec<ImageSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("no spoil reveal for this ballot")]
    MissingReveal,
    #[error("the revealed column is not published")]
    Unpublished,
    #[error("revealed column is inconsistent with its publication")]
    Forgery(ForgeryEvidence),
}

pub fn reconstruct_partial_image(manifest: &ElectionManifest, index: &BoardIndex, ballot_id: &Bytes32) -> Result<PartialImage, ImageError> {
    let reveal = index.reveal_for(ballot_id).ok_or(ImageError::MissingReveal)?;
    let publication = index.publication(&reveal.longcode).ok_or(ImageError::Unpublished)?;
    let ballot = check_reveal(manifest, reveal, publication).map_err(ImageError::Forgery)?;
    let sections = manifest
        .sections()
        .iter()
        .map(|sec| {
            let names = &manifest.contests[sec.contest].candidates;
            let cells = ballot.section(&sec.id).expect("regenerated from the manifest");
            ImageSection {
                section: sec.id.clone(),
                rows: names.iter().zip(&cells.shortcodes).map(|(n, c)| ImageRow { candidate: n.clone(), code: c.clone() }).collect(),
            }
        })
        .collect();
    Ok(PartialImage { ballot_id: *ballot_id, column: reveal.column, sections })
}

/// Rows `(section, candidate)` where the printed column differs from the image.
pub fn compare_image(image: &PartialImage, printed: &PrintedBallot) -> Vec<(String, usize)> {
    let col = image.column.index();
    let mut out = Vec::new();
    for s in &image.sections {
        for (j, row) in s.rows.iter().enumerate() {
            if printed.code(&s.section, j, col) != Some(row.code.as_str()) {
                out.push((s.section.clone(), j));
            }
        }
    }
    out
}

/// Chance that at least one of `f` forged-and-verified ballots is exposed.
pub fn detection_confidence(f: u32) -> f64 {
    1.0 - 0.5f64.powi(f as i32)
}

/// With `n` beacon bits under adversarial influence, one pairing in `2^(2^n)`
/// survives; the exponent `2^n` is returned.
pub fn pairing_resistance_bits(n: u32) -> f64 {
    2f64.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::{generate_encrypted_ballot, RngTrng};
    use crate::testutil::{manifest, seeded};

    #[test]
    fn pairing_cases() {
        let (m, _) = manifest();
        let mut rng = seeded(31);
        let a = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let b = generate_encrypted_ballot(&m, 1, &mut RngTrng(&mut rng)).unwrap();
        if !collides(&a, &b) {
            assert_eq!(pair_ballots(&[&a, &b]), Ok(vec![(0, 1)]));
        }
        let mut clash = b.clone();
        clash.sections[0].shortcodes[1] = a.sections[0].shortcodes[2].clone();
        assert_eq!(pair_ballots(&[&a, &clash]), Err(RemoteVoteError::NoPairing(0)));
        assert_eq!(pair_ballots(&[&a]), Err(RemoteVoteError::OddCount));
    }

    #[test]
    fn hundred_ballots_pair() {
        let (m, _) = manifest();
        let mut rng = seeded(32);
        let ballots: Vec<_> = (0..100).map(|i| generate_encrypted_ballot(&m, i, &mut RngTrng(&mut rng)).unwrap()).collect();
        let refs: Vec<&EncryptedBallot> = ballots.iter().collect();
        let pairs = pair_ballots(&refs).unwrap();
        assert_eq!(pairs.len(), 50);
        assert!(pairs.iter().all(|&(i, j)| !collides(&ballots[i], &ballots[j])));
    }

    #[test]
    fn spoil_column_rule() {
        let id = Bytes32::digest("id", &[]);
        let beacon = b"beacon".to_vec();
        let c = select_spoil_column(&beacon, &id);
        assert_eq!(c, select_spoil_column(&beacon, &id));
        let h = tagged_hash("rv/spoil", &[&beacon, &id.0]);
        assert_eq!(c, if h[31] & 1 == 0 { Column::A } else { Column::B });

        let mut flipped = beacon.clone();
        flipped[0] ^= 1;
        let mut rng = seeded(33);
        let changed = (0..1000)
            .filter(|_| {
                let id = Bytes32::random(&mut rng);
                select_spoil_column(&beacon, &id) != select_spoil_column(&flipped, &id)
            })
            .count();
        assert!((450..=550).contains(&changed), "changed {changed}");
    }

    #[test]
    fn reveal_checks() {
        let (m, _) = manifest();
        let mut rng = seeded(34);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let publication = BallotPublication { longcode: b.longcode, sections: b.public_sections(), verification_key: None };
        let beacon = b"x";
        let id = Bytes32::digest("pair", &[]);
        let col = select_spoil_column(beacon, &id);
        assert_eq!(publish_spoil(id, col.other(), beacon, &b), Err(RemoteVoteError::WrongColumn(col.other())));
        let reveal = publish_spoil(id, col, beacon, &b).unwrap();
        assert!(check_reveal(&m, &reveal, &publication).is_ok());
        let mut bad = reveal.clone();
        bad.true_randomness[4].0[0] ^= 1;
        let err = check_reveal(&m, &bad, &publication).unwrap_err();
        assert_eq!(err.sections, ["board"]);
    }

    #[test]
    fn confidence_and_resistance() {
        assert_eq!(detection_confidence(0), 0.0);
        assert_eq!(detection_confidence(1), 0.5);
        assert!((detection_confidence(8) - (1.0 - 1.0 / 256.0)).abs() < 1e-12);
        assert_eq!(pairing_resistance_bits(4), 16.0);
        assert_eq!(pairing_resistance_bits(0), 1.0);
    }
}
