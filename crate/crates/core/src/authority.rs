//! The election authority's private state and every action it posts.
//!
//! Low-level steps (`generate`, `publish`, `pair_published`, `spoil`,
//! `record_cast`, `post_scratch_notice`) are public so that the simulator can
//! script misbehaving authorities; the composite steps follow the protocol.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::ScalarField;
use crate::ballot::{
    build_ballot, generate_encrypted_ballot, BallotError, BallotForm, EncryptedBallot, PrintedBallot, ReplayTrng,
    TrueRandomness,
};
use crate::board::{
    BallotPublication, BoardError, BoardIndex, BoardLog, ChallengeRecord, DecryptionRecord, Disclaimer, GraceSpoil,
    MixRecord, OpenedCell, OpeningRecord, PairRecord, ResponseRecord, ScratchNotice, TallyRecord, VoterListRecord,
};
use crate::disputes::{prove_validity, BallotKeypair, DisputeError};
use crate::hash::{tagged_hash, Bytes32};
use crate::manifest::ElectionManifest;
use crate::remotevote::{pair_greedy, publish_spoil, reveal_of, Column, RemoteVoteError};
use crate::safevote::{window_open, Disposition, SafeVoteError};
use crate::tally::{
    aggregate_cells, cast_codes, combine_all, contest_columns, mix, open_all, partial_decrypt_all, public_rows,
    run_method, selections, Marks, MixError, Openings, Selections, TallyError,
};
use crate::{Cell, Element, Scalar, TrusteeShare};

#[derive(Debug, thiserror::Error)]
pub enum AuthorityError {
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error(transparent)]
    RemoteVote(#[from] RemoteVoteError),
    #[error(transparent)]
    SafeVote(#[from] SafeVoteError),
    #[error(transparent)]
    Tally(#[from] TallyError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Dispute(#[from] DisputeError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("unknown ballot {0}")]
    UnknownBallot(Bytes32),
    #[error("ballot {0} has no spoiled column yet")]
    NotSpoiled(Bytes32),
    #[error("the beacon is already posted")]
    BeaconPosted,
    #[error("trustee decryption failed at row {0}, column {1}: {2}")]
    Decryption(usize, usize, String),
    #[error("no mixed contests awaiting decryption")]
    NothingToOpen,
    #[error("challenge at {0} not found")]
    UnknownChallenge(u64),
}

/// One printed ballot and the encrypted columns behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalBallot {
    pub form: BallotForm,
    pub columns: Vec<Bytes32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signing_key: Option<Scalar>,
    /// Column revealed after the beacon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spoiled: Option<Column>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastEntry {
    pub column: Bytes32,
    pub selections: Selections,
    pub receipt_seq: u64,
}

/// What regenerates a ballot exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotSecret {
    pub serial: u64,
    pub seed: Bytes32,
    pub true_randomness: Vec<Bytes32>,
    pub skipped: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Authority {
    pub manifest: ElectionManifest,
    pub trustee_shares: Vec<TrusteeShare>,
    pub ballots: BTreeMap<Bytes32, EncryptedBallot>,
    pub physical: BTreeMap<Bytes32, PhysicalBallot>,
    pub issued: BTreeSet<Bytes32>,
    pub next_serial: u64,
    pub beacon: Option<Vec<u8>>,
    pub cast: BTreeMap<Bytes32, CastEntry>,
    /// Private link from a scratched ballot to its duplicate.
    pub duplicates: BTreeMap<Bytes32, Bytes32>,
    pub challenged: BTreeSet<Bytes32>,
    /// Grace window end per noticed or disclaimed ballot.
    pub grace: BTreeMap<Bytes32, u64>,
    pub grace_spoiled: BTreeSet<Bytes32>,
    /// Mixed rows per contest awaiting decryption.
    pub mixed: BTreeMap<String, Vec<Vec<Cell>>>,
    pub results_posted: bool,
}

/// On-disk form of [`Authority`]; ballots are stored as their regeneration secrets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthoritySecrets {
    pub trustee_shares: Vec<TrusteeShare>,
    pub ballots: Vec<BallotSecret>,
    /// Ballots deliberately altered after generation are kept whole.
    #[serde(default)]
    pub altered: Vec<EncryptedBallot>,
    pub physical: BTreeMap<Bytes32, PhysicalBallot>,
    pub issued: BTreeSet<Bytes32>,
    pub next_serial: u64,
    #[serde(default, with = "opt_hex")]
    pub beacon: Option<Vec<u8>>,
    pub cast: BTreeMap<Bytes32, CastEntry>,
    pub duplicates: BTreeMap<Bytes32, Bytes32>,
    pub challenged: BTreeSet<Bytes32>,
    pub grace: BTreeMap<Bytes32, u64>,
    pub grace_spoiled: BTreeSet<Bytes32>,
    pub mixed: BTreeMap<String, Vec<Vec<Cell>>>,
    pub results_posted: bool,
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|h| hex::decode(h).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Hook that may rewrite a contest's mixed rows after the proof is made.
pub type MixTamper<'a> = &'a mut dyn FnMut(&str, &mut Vec<Vec<Cell>>);

impl Authority {
    pub fn new(manifest: ElectionManifest, trustee_shares: Vec<TrusteeShare>) -> Self {
        Authority {
            manifest,
            trustee_shares,
            ballots: BTreeMap::new(),
            physical: BTreeMap::new(),
            issued: BTreeSet::new(),
            next_serial: 0,
            beacon: None,
            cast: BTreeMap::new(),
            duplicates: BTreeMap::new(),
            challenged: BTreeSet::new(),
            grace: BTreeMap::new(),
            grace_spoiled: BTreeSet::new(),
            mixed: BTreeMap::new(),
            results_posted: false,
        }
    }

    pub fn post_voter_list(&self, board: &mut BoardLog, voters: &[String]) -> u64 {
        let mut sorted: Vec<&String> = voters.iter().collect();
        sorted.sort();
        let parts: Vec<&[u8]> = sorted.iter().map(|v| v.as_bytes()).collect();
        let digest = Bytes32(tagged_hash("rv/voters", &parts));
        board.append(&VoterListRecord { voters: voters.len() as u64, digest }).seq
    }

    // -- generation ---------------------------------------------------------

    /// A fresh encrypted ballot, not yet stored or published.
    pub fn generate(&mut self, trng: &mut dyn TrueRandomness) -> Result<EncryptedBallot, AuthorityError> {
        let b = generate_encrypted_ballot(&self.manifest, self.next_serial, trng)?;
        self.next_serial += 1;
        Ok(b)
    }

    /// Stores a ballot and posts its advance commitment.
    pub fn publish(&mut self, board: &mut BoardLog, ballot: EncryptedBallot, verification_key: Option<Element>) -> Bytes32 {
        let longcode = ballot.longcode;
        board.append(&BallotPublication { longcode, sections: ballot.public_sections(), verification_key });
        self.ballots.insert(longcode, ballot);
        longcode
    }

    fn keypair(&self, trng: &mut dyn TrueRandomness) -> Result<Option<BallotKeypair>, AuthorityError> {
        if !self.manifest.options.ballot_keys {
            return Ok(None);
        }
        let secret = Scalar::from_wide_bytes(&trng.draw()?.0);
        Ok(Some(BallotKeypair::from_secret(&self.manifest.group, secret)))
    }

    /// Publishes a single-column ballot as a physical SAFE Vote ballot.
    pub fn create_single(&mut self, board: &mut BoardLog, trng: &mut dyn TrueRandomness) -> Result<Bytes32, AuthorityError> {
        let ballot = self.generate(trng)?;
        self.publish_single(board, ballot, trng)
    }

    pub fn publish_single(
        &mut self,
        board: &mut BoardLog,
        ballot: EncryptedBallot,
        trng: &mut dyn TrueRandomness,
    ) -> Result<Bytes32, AuthorityError> {
        let key = self.keypair(trng)?;
        let id = self.publish(board, ballot, key.map(|k| k.verification_key));
        self.physical.insert(
            id,
            PhysicalBallot { form: BallotForm::SafeVote, columns: vec![id], signing_key: key.map(|k| k.secret), spoiled: None },
        );
        Ok(id)
    }

    /// Joins two published ballots under labels A and B.
    pub fn pair_published(
        &mut self,
        board: &mut BoardLog,
        a: Bytes32,
        b: Bytes32,
        form: BallotForm,
        trng: &mut dyn TrueRandomness,
    ) -> Result<Bytes32, AuthorityError> {
        let key = self.keypair(trng)?;
        let ballot_id = crate::ballot::derive_pair_id(&a, &b);
        board.append(&PairRecord { ballot_id, a, b, verification_key: key.map(|k| k.verification_key) });
        self.physical.insert(ballot_id, PhysicalBallot { form, columns: vec![a, b], signing_key: key.map(|k| k.secret), spoiled: None });
        Ok(ballot_id)
    }

    /// Generates, publishes and pairs until `n` new two-column ballots exist.
    pub fn create_pairs(
        &mut self,
        board: &mut BoardLog,
        trng: &mut dyn TrueRandomness,
        n: usize,
        form: BallotForm,
    ) -> Result<Vec<Bytes32>, AuthorityError> {
        let mut pool: Vec<Bytes32> = Vec::new();
        let mut ids = Vec::new();
        let mut stalled = false;
        while ids.len() < n {
            // a pool whose ballots all collide needs fresh ballots to make progress
            while pool.len() < 2 * (n - ids.len()) || stalled {
                stalled = false;
                let b = self.generate(trng)?;
                pool.push(self.publish(board, b, None));
            }
            let refs: Vec<&EncryptedBallot> = pool.iter().map(|l| &self.ballots[l]).collect();
            let (pairs, left) = pair_greedy(&refs);
            let take = pairs.len().min(n - ids.len());
            stalled = take == 0;
            for &(i, j) in &pairs[..take] {
                ids.push(self.pair_published(board, pool[i], pool[j], form, trng)?);
            }
            pool = left.iter().map(|&i| pool[i]).collect();
        }
        Ok(ids)
    }

    /// The printed ballot for a physical id.
    pub fn print(&self, ballot_id: &Bytes32) -> Result<PrintedBallot, AuthorityError> {
        let p = self.physical.get(ballot_id).ok_or(AuthorityError::UnknownBallot(*ballot_id))?;
        let cols: Vec<&EncryptedBallot> = p.columns.iter().map(|c| &self.ballots[c]).collect();
        Ok(PrintedBallot::print(&self.manifest, p.form, &cols, p.signing_key))
    }

    /// Hands out the next unissued physical ballot of `form`.
    pub fn issue(&mut self, form: BallotForm) -> Option<Bytes32> {
        let id = *self.physical.iter().find(|(id, p)| p.form == form && !self.issued.contains(*id))?.0;
        self.issued.insert(id);
        Some(id)
    }

    /// Replaces a challenged ballot, generating a fresh one if no spare is left
    /// and advance commitment still allows it.
    pub fn issue_replacement(
        &mut self,
        board: &mut BoardLog,
        old: &Bytes32,
        trng: &mut dyn TrueRandomness,
    ) -> Result<Bytes32, AuthorityError> {
        let form = self.physical.get(old).ok_or(AuthorityError::UnknownBallot(*old))?.form;
        if self.cast.contains_key(old) {
            return Err(SafeVoteError::AlreadyCast.into());
        }
        self.challenged.insert(*old);
        if let Some(id) = self.issue(form) {
            return Ok(id);
        }
        if self.beacon.is_some() || !self.cast.is_empty() || form != BallotForm::SafeVote {
            return Err(SafeVoteError::NoSpares.into());
        }
        let id = self.create_single(board, trng)?;
        self.issued.insert(id);
        Ok(id)
    }

    // -- beacon and spoiling -----------------------------------------------

    pub fn post_beacon(&mut self, board: &mut BoardLog, beacon: &[u8]) -> Result<u64, AuthorityError> {
        if self.beacon.is_some() {
            return Err(AuthorityError::BeaconPosted);
        }
        self.beacon = Some(beacon.to_vec());
        Ok(board.append(&crate::board::BeaconRecord { beacon: beacon.to_vec() }).seq)
    }

    /// Reveals `column` of a pair, recording it as spoiled. No policy check.
    pub fn spoil(&mut self, board: &mut BoardLog, ballot_id: &Bytes32, column: Column) -> Result<u64, AuthorityError> {
        let p = self.physical.get_mut(ballot_id).ok_or(AuthorityError::UnknownBallot(*ballot_id))?;
        p.spoiled = Some(column);
        let reveal = reveal_of(*ballot_id, column, &self.ballots[&p.columns[column.index()]]);
        Ok(board.append(&reveal).seq)
    }

    /// Reveals the beacon-selected column of every pair.
    pub fn spoil_all(&mut self, board: &mut BoardLog) -> Result<(), AuthorityError> {
        let beacon = self.beacon.clone().ok_or(AuthorityError::NotSpoiled(Bytes32::ZERO))?;
        let pairs: Vec<Bytes32> = self.physical.iter().filter(|(_, p)| p.columns.len() == 2 && p.spoiled.is_none()).map(|(id, _)| *id).collect();
        for id in pairs {
            let col = crate::remotevote::select_spoil_column(&beacon, &id);
            let p = self.physical.get_mut(&id).unwrap();
            let reveal = publish_spoil(id, col, &beacon, &self.ballots[&p.columns[col.index()]])?;
            p.spoiled = Some(col);
            board.append(&reveal);
        }
        Ok(())
    }

    // -- returns ------------------------------------------------------------

    /// Index of the column a physical ballot is cast from.
    pub fn cast_column(&self, ballot_id: &Bytes32) -> Result<usize, AuthorityError> {
        let p = self.physical.get(ballot_id).ok_or(AuthorityError::UnknownBallot(*ballot_id))?;
        match p.columns.len() {
            1 => Ok(0),
            _ => Ok(p.spoiled.ok_or(AuthorityError::NotSpoiled(*ballot_id))?.other().index()),
        }
    }

    /// Posts a receipt for `column` of a physical ballot. No policy check.
    pub fn record_cast(
        &mut self,
        board: &mut BoardLog,
        ballot_id: &Bytes32,
        column: usize,
        sel: Selections,
    ) -> Result<u64, AuthorityError> {
        let p = self.physical.get(ballot_id).ok_or(AuthorityError::UnknownBallot(*ballot_id))?;
        let longcode = p.columns[column];
        let codes = cast_codes(&self.ballots[&longcode], &sel)?;
        let seq = board.append(&crate::board::CastReceipt { ballot_id: *ballot_id, column: longcode, codes }).seq;
        self.cast.insert(*ballot_id, CastEntry { column: longcode, selections: sel, receipt_seq: seq });
        self.issued.insert(*ballot_id);
        Ok(seq)
    }

    pub fn post_scratch_notice(&mut self, board: &mut BoardLog, ballot_id: &Bytes32) -> u64 {
        let seq = board.next_seq();
        let grace_until = seq + self.manifest.options.grace_window;
        self.grace.insert(*ballot_id, grace_until);
        board.append(&ScratchNotice { ballot_id: *ballot_id, grace_until }).seq
    }

    /// Processes a returned ballot: normal cast if the cast column is intact,
    /// otherwise a scratch notice and a cast on a duplicate.
    pub fn receive(&mut self, board: &mut BoardLog, returned: &PrintedBallot, marks: &Marks) -> Result<Disposition, AuthorityError> {
        let id = returned.ballot_id;
        if !self.physical.contains_key(&id) {
            return Err(SafeVoteError::UnknownBallot.into());
        }
        if self.cast.contains_key(&id) || self.grace.contains_key(&id) {
            return Err(SafeVoteError::AlreadyCast.into());
        }
        let sel = selections(&self.manifest, marks)?;
        let column = self.cast_column(&id)?;
        let scratched = match returned.form {
            BallotForm::RemoteVotePair => false,
            _ => !returned.scratch_state(column).intact,
        };
        if !scratched {
            let receipt_seq = self.record_cast(board, &id, column, sel)?;
            return Ok(Disposition::Cast { receipt_seq });
        }
        let form = self.physical[&id].form;
        let duplicate = self.issue(form).ok_or(SafeVoteError::NoSpares)?;
        let notice_seq = self.post_scratch_notice(board, &id);
        let dup_column = self.cast_column(&duplicate)?;
        self.record_cast(board, &duplicate, dup_column, sel)?;
        self.duplicates.insert(id, duplicate);
        Ok(Disposition::Duplicated { notice_seq, duplicate })
    }

    /// Withdraws a duplicated or disclaimed ballot from the tally at the voter's request.
    pub fn grace_spoil(&mut self, board: &mut BoardLog, ballot_id: &Bytes32) -> Result<u64, AuthorityError> {
        let until = *self.grace.get(ballot_id).ok_or(SafeVoteError::NoNotice)?;
        if !window_open(board.next_seq(), until) || !self.mixed.is_empty() || self.results_posted {
            return Err(SafeVoteError::WindowClosed.into());
        }
        let cast_id = self.duplicates.get(ballot_id).copied().unwrap_or(*ballot_id);
        let entry = self.cast.get(&cast_id).ok_or(SafeVoteError::NoNotice)?;
        if !self.grace_spoiled.insert(*ballot_id) {
            return Err(SafeVoteError::AlreadyCast.into());
        }
        Ok(board.append(&GraceSpoil { ballot_id: *ballot_id, spoiled: entry.column }).seq)
    }

    pub fn disclaim(&mut self, board: &mut BoardLog, ballot_id: &Bytes32, section: &str) -> Result<u64, AuthorityError> {
        if self.results_posted {
            return Err(DisputeError::AfterResults.into());
        }
        if !self.cast.contains_key(ballot_id) {
            return Err(AuthorityError::UnknownBallot(*ballot_id));
        }
        let grace_until = board.next_seq() + self.manifest.options.grace_window;
        self.grace.insert(*ballot_id, grace_until);
        Ok(board.append(&Disclaimer { ballot_id: *ballot_id, section: section.into(), grace_until }).seq)
    }

    // -- disputes -----------------------------------------------------------

    /// Reveals the disputed cell's ciphertext with a validity proof.
    pub fn respond<R: RngCore + ?Sized>(&self, board: &mut BoardLog, challenge_seq: u64, rng: &mut R) -> Result<u64, AuthorityError> {
        let record = self.response_for(board, challenge_seq, rng)?;
        Ok(board.append(&record).seq)
    }

    pub fn response_for<R: RngCore + ?Sized>(&self, board: &BoardLog, challenge_seq: u64, rng: &mut R) -> Result<ResponseRecord, AuthorityError> {
        let post = board.posts().get(challenge_seq as usize).ok_or(AuthorityError::UnknownChallenge(challenge_seq))?;
        let ch: ChallengeRecord = post.decode().map_err(|_| AuthorityError::UnknownChallenge(challenge_seq))?;
        if !window_open(board.next_seq(), challenge_seq + self.manifest.options.dispute_window) {
            return Err(DisputeError::WindowClosed.into());
        }
        let ev = &ch.evidence;
        let entry = self.cast.get(&ev.ballot_id).ok_or(AuthorityError::UnknownBallot(ev.ballot_id))?;
        let ballot = &self.ballots[&entry.column];
        let section = self.manifest.section(&ev.section).ok_or_else(|| DisputeError::UnknownSection(ev.section.clone()))?;
        let j = ballot.candidate_for_code(&ev.section, &ev.shortcode).ok_or(DisputeError::UnknownCode)?;
        let cell = ballot.section(&ev.section).unwrap().candidates[j];
        let opening = cell.opening.expect("authority cells carry openings");
        let proof = prove_validity(
            &self.manifest.group,
            self.manifest.pk(),
            &cell.commitment,
            &cell.ciphertext,
            &opening,
            &section.admissible_weights(),
            rng,
        );
        Ok(ResponseRecord { challenge_seq, ciphertext: cell.ciphertext, proof })
    }

    // -- tally --------------------------------------------------------------

    /// Aggregate rows (all sections) for every counted receipt, in board order.
    pub fn aggregate(&self, board: &BoardLog) -> Result<Vec<Vec<Cell>>, AuthorityError> {
        let index = BoardIndex::build(board)?;
        index
            .counted_receipts()
            .into_iter()
            .map(|r| {
                let ballot = self.ballots.get(&r.column).ok_or(AuthorityError::UnknownBallot(r.column))?;
                let mut sel = Selections::new();
                for (section, codes) in &r.codes {
                    let chosen = codes
                        .iter()
                        .map(|c| ballot.candidate_for_code(section, c).ok_or_else(|| TallyError::UnknownCode(section.clone(), c.clone())))
                        .collect::<Result<Vec<_>, _>>()?;
                    sel.insert(section.clone(), chosen);
                }
                Ok(aggregate_cells(&self.manifest, ballot, &sel)?)
            })
            .collect()
    }

    /// Mixes each contest. `tamper` sees each contest's output after its proof is made.
    pub fn mix_contests<R: RngCore + ?Sized>(
        &mut self,
        board: &mut BoardLog,
        rng: &mut R,
        mut tamper: Option<MixTamper<'_>>,
    ) -> Result<(), AuthorityError> {
        let rows = self.aggregate(board)?;
        for (ci, contest) in self.manifest.contests.iter().enumerate() {
            let cols = contest_columns(&self.manifest, ci);
            let input: Vec<Vec<Cell>> = rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
            let head = board.head();
            let rounds = self.manifest.options.mix_rounds as usize;
            let (mut output, proof) = mix(&self.manifest.group, self.manifest.pk(), &input, rounds, &head, rng)?;
            let honest = public_rows(&output);
            if let Some(t) = tamper.as_mut() {
                t(&contest.id, &mut output);
            }
            let published = if tamper.is_some() { public_rows(&output) } else { honest };
            board.append(&MixRecord { contest: contest.id.clone(), board_head: head, input: public_rows(&input), output: published, proof });
            self.mixed.insert(contest.id.clone(), output);
        }
        Ok(())
    }

    /// Trustee decryption and opening of every mixed contest.
    pub fn decrypt_and_open(&mut self, board: &mut BoardLog) -> Result<Vec<(String, Openings)>, AuthorityError> {
        if self.mixed.is_empty() {
            return Err(AuthorityError::NothingToOpen);
        }
        let t = self.manifest.trustees.threshold as usize;
        let trustees = &self.trustee_shares[..t.min(self.trustee_shares.len())];
        let mut opened = Vec::new();
        for (ci, contest) in self.manifest.contests.iter().enumerate() {
            let Some(rows) = self.mixed.get(&contest.id) else { continue };
            let sections = self.manifest.contest_sections(ci);
            let cts: Vec<Vec<_>> = rows.iter().map(|r| r.iter().map(|c| c.ciphertext).collect()).collect();
            let shares = partial_decrypt_all(&self.manifest.group, trustees, &cts);
            let s = combine_all(&self.manifest.group, &self.manifest.trustees, &cts, &shares)
                .map_err(|(i, c, e)| AuthorityError::Decryption(i, c, e.to_string()))?;
            board.append(&DecryptionRecord { contest: contest.id.clone(), ciphertexts: cts, shares });
            let values = open_all(&self.manifest.group, &sections, &public_rows(rows), &s);
            let openings = s
                .iter()
                .zip(&values)
                .map(|(sr, vr)| sr.iter().zip(vr).map(|(s_elem, m)| OpenedCell { s_elem: *s_elem, m: *m }).collect())
                .collect();
            board.append(&OpeningRecord { contest: contest.id.clone(), openings });
            opened.push((contest.id.clone(), values));
        }
        Ok(opened)
    }

    pub fn publish_results(&mut self, board: &mut BoardLog, opened: &[(String, Openings)]) -> TallyRecord {
        let results = opened
            .iter()
            .map(|(id, values)| {
                let (ci, contest) = self.manifest.contest(id).expect("opened contests come from the manifest");
                run_method(contest, &self.manifest.contest_sections(ci), values)
            })
            .collect();
        let record = TallyRecord { results };
        board.append(&record);
        self.results_posted = true;
        record
    }

    /// Mix, decrypt, open and publish.
    pub fn tally<R: RngCore + ?Sized>(&mut self, board: &mut BoardLog, rng: &mut R) -> Result<TallyRecord, AuthorityError> {
        self.mix_contests(board, rng, None)?;
        let opened = self.decrypt_and_open(board)?;
        Ok(self.publish_results(board, &opened))
    }

    // -- persistence --------------------------------------------------------

    pub fn secrets(&self) -> AuthoritySecrets {
        let mut ballots = Vec::new();
        let mut altered = Vec::new();
        for b in self.ballots.values() {
            let regenerated = build_ballot(&self.manifest, b.serial, b.seed, &mut ReplayTrng::new(b.true_randomness.clone()));
            if regenerated.as_ref() == Ok(b) {
                ballots.push(BallotSecret { serial: b.serial, seed: b.seed, true_randomness: b.true_randomness.clone(), skipped: b.skipped.clone() });
            } else {
                altered.push(b.clone());
            }
        }
        AuthoritySecrets {
            trustee_shares: self.trustee_shares.clone(),
            ballots,
            altered,
            physical: self.physical.clone(),
            issued: self.issued.clone(),
            next_serial: self.next_serial,
            beacon: self.beacon.clone(),
            cast: self.cast.clone(),
            duplicates: self.duplicates.clone(),
            challenged: self.challenged.clone(),
            grace: self.grace.clone(),
            grace_spoiled: self.grace_spoiled.clone(),
            mixed: self.mixed.clone(),
            results_posted: self.results_posted,
        }
    }

    pub fn from_secrets(manifest: ElectionManifest, s: AuthoritySecrets) -> Result<Self, AuthorityError> {
        let mut ballots = BTreeMap::new();
        for b in &s.ballots {
            let ballot = build_ballot(&manifest, b.serial, b.seed, &mut ReplayTrng::new(b.true_randomness.clone()))?;
            ballots.insert(ballot.longcode, ballot);
        }
        for b in s.altered {
            ballots.insert(b.longcode, b);
        }
        Ok(Authority {
            manifest,
            trustee_shares: s.trustee_shares,
            ballots,
            physical: s.physical,
            issued: s.issued,
            next_serial: s.next_serial,
            beacon: s.beacon,
            cast: s.cast,
            duplicates: s.duplicates,
            challenged: s.challenged,
            grace: s.grace,
            grace_spoiled: s.grace_spoiled,
            mixed: s.mixed,
            results_posted: s.results_posted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::RngTrng;
    use crate::testutil::{manifest, seeded};

    #[test]
    fn safevote_lifecycle_and_secrets_roundtrip() {
        let (m, shares) = manifest();
        let mut auth = Authority::new(m, shares);
        let mut board = BoardLog::new();
        let mut rng = seeded(51);
        auth.post_voter_list(&mut board, &["v1".into(), "v2".into()]);
        for _ in 0..4 {
            auth.create_single(&mut board, &mut RngTrng(&mut rng)).unwrap();
        }
        let a = auth.issue(BallotForm::SafeVote).unwrap();
        let b = auth.issue(BallotForm::SafeVote).unwrap();
        let pa = auth.print(&a).unwrap();
        let mut pb = auth.print(&b).unwrap();
        pb.scratch_off(0);
        auth.receive(&mut board, &pa, &Marks::default().with("mayor", &[1])).unwrap();
        let d = auth.receive(&mut board, &pb, &Marks::default().with("mayor", &[2])).unwrap();
        assert!(matches!(d, Disposition::Duplicated { .. }));
        assert!(auth.receive(&mut board, &pa, &Marks::default()).is_err());

        let secrets = serde_json::to_string(&auth.secrets()).unwrap();
        let back = Authority::from_secrets(auth.manifest.clone(), serde_json::from_str(&secrets).unwrap()).unwrap();
        assert_eq!(back.ballots, auth.ballots);

        let mut auth = back;
        let result = auth.tally(&mut board, &mut rng).unwrap();
        assert_eq!(result.results[0].counts, [0, 1, 1]);
        assert!(auth.disclaim(&mut board, &a, "mayor").is_err());
    }
}
