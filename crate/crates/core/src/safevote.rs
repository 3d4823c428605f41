//! Scratch-off challenge of a single printed ballot and the scratched-return rules.

use serde::{Deserialize, Serialize};

use crate::ballot::{build_ballot, derive_pair_id, key_schedule, qr_decrypt, BallotError, BallotForm, PrintedBallot, ReplayTrng};
use crate::hash::Bytes32;
use crate::manifest::ElectionManifest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SafeVoteError {
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error("ballot has no QR payload for column {0}")]
    NoPayload(usize),
    #[error("QR payload is not hex")]
    PayloadEncoding,
    #[error("unknown ballot id")]
    UnknownBallot,
    #[error("ballot already cast")]
    AlreadyCast,
    #[error("grace window closed")]
    WindowClosed,
    #[error("no scratch notice or disclaimer for this ballot")]
    NoNotice,
    #[error("results are already posted")]
    AfterResults,
    #[error("no spare ballots left")]
    NoSpares,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowComparison {
    pub section: String,
    pub candidate: usize,
    pub expected: String,
    pub printed: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChallengeVerdict {
    Consistent,
    Discrepant { rows: Vec<(String, usize)>, id: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeReport {
    pub ballot_id: Bytes32,
    pub expected_id: Bytes32,
    pub rows: Vec<RowComparison>,
    pub id_matches: bool,
    pub verdict: ChallengeVerdict,
}

/// Regenerates one column from its revealed seed and QR payload and compares
/// it with what is printed. Needs nothing but the paper ballot and the manifest.
pub fn challenge(manifest: &ElectionManifest, printed: &PrintedBallot, column: usize, seed: &Bytes32) -> Result<ChallengeReport, SafeVoteError> {
    let keys = key_schedule(&seed.0)?;
    let payload = printed.qr.get(column).ok_or(SafeVoteError::NoPayload(column))?;
    let payload = hex::decode(payload).map_err(|_| SafeVoteError::PayloadEncoding)?;
    let randomness = qr_decrypt(&payload, &keys.qr_key)?;
    let ballot = build_ballot(manifest, 0, *seed, &mut ReplayTrng::new(randomness))?;

    let mut rows = Vec::new();
    let mut bad_rows = Vec::new();
    for sec in manifest.sections() {
        let cells = ballot.section(&sec.id).expect("regenerated from the manifest");
        for (j, expected) in cells.shortcodes.iter().enumerate() {
            let printed_code = printed.code(&sec.id, j, column).unwrap_or("").to_string();
            if &printed_code != expected {
                bad_rows.push((sec.id.clone(), j));
            }
            rows.push(RowComparison { section: sec.id.clone(), candidate: j, expected: expected.clone(), printed: printed_code });
        }
    }
    let (expected_id, id_matches) = match printed.form {
        BallotForm::SafeVote => (ballot.longcode, ballot.longcode == printed.ballot_id),
        _ => {
            let mut ids = printed.column_ids.clone();
            let matches_column = ids.get(column) == Some(&ballot.longcode);
            if let Some(slot) = ids.get_mut(column) {
                *slot = ballot.longcode;
            }
            let expected = if ids.len() == 2 { derive_pair_id(&ids[0], &ids[1]) } else { ballot.longcode };
            (expected, matches_column && expected == printed.ballot_id)
        }
    };
    let verdict = if bad_rows.is_empty() && id_matches {
        ChallengeVerdict::Consistent
    } else {
        ChallengeVerdict::Discrepant { rows: bad_rows, id: !id_matches }
    };
    Ok(ChallengeReport { ballot_id: printed.ballot_id, expected_id, rows, id_matches, verdict })
}

/// What happens to a returned ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Disposition {
    /// Cast normally; a receipt was posted.
    Cast { receipt_seq: u64 },
    /// Scratched: a notice was posted and the marks were cast on `duplicate`.
    Duplicated { notice_seq: u64, duplicate: Bytes32 },
}

/// Whether a grace action at `seq` falls inside the window closing at `grace_until`.
pub fn window_open(seq: u64, grace_until: u64) -> bool {
    seq <= grace_until
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::{generate_encrypted_ballot, RngTrng};
    use crate::testutil::{manifest, seeded};

    #[test]
    fn honest_swapped_and_mismatched_seed() {
        let (m, _) = manifest();
        let mut rng = seeded(41);
        let a = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let b = generate_encrypted_ballot(&m, 1, &mut RngTrng(&mut rng)).unwrap();
        let printed = PrintedBallot::print(&m, BallotForm::SafeVote, &[&a], None);
        let report = challenge(&m, &printed, 0, &a.seed).unwrap();
        assert_eq!(report.verdict, ChallengeVerdict::Consistent);

        let mut swapped = printed.clone();
        let rows = &mut swapped.sections[1].rows;
        let tmp = rows[0].codes[0].clone();
        rows[0].codes[0] = rows[2].codes[0].clone();
        rows[2].codes[0] = tmp;
        let report = challenge(&m, &swapped, 0, &a.seed).unwrap();
        assert_eq!(
            report.verdict,
            ChallengeVerdict::Discrepant { rows: vec![("board".into(), 0), ("board".into(), 2)], id: false }
        );

        // QR and seed of another ballot under this ballot's printed codes
        let mut other = printed.clone();
        other.qr = PrintedBallot::print(&m, BallotForm::SafeVote, &[&b], None).qr;
        let report = challenge(&m, &other, 0, &b.seed).unwrap();
        assert!(matches!(report.verdict, ChallengeVerdict::Discrepant { id: true, .. }));

        let mut tampered = printed.clone();
        tampered.qr[0].replace_range(0..2, "ff");
        if tampered.qr != printed.qr {
            assert!(matches!(challenge(&m, &tampered, 0, &a.seed), Err(SafeVoteError::Ballot(BallotError::TamperedPayload))));
        }
    }

    #[test]
    fn hybrid_column_challenge() {
        let (m, _) = manifest();
        let mut rng = seeded(42);
        let a = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let b = generate_encrypted_ballot(&m, 1, &mut RngTrng(&mut rng)).unwrap();
        let printed = PrintedBallot::print(&m, BallotForm::Hybrid, &[&a, &b], None);
        assert_eq!(challenge(&m, &printed, 1, &b.seed).unwrap().verdict, ChallengeVerdict::Consistent);
        assert_eq!(challenge(&m, &printed, 0, &a.seed).unwrap().verdict, ChallengeVerdict::Consistent);
    }

    #[test]
    fn window() {
        assert!(window_open(5, 5));
        assert!(!window_open(6, 5));
    }
}
