//! Universal verification of a board, and the checks an individual voter
//! runs against their own paper ballot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::algebra::GroupElement;
use crate::ballot::{derive_longcode, derive_pair_id, derive_shortcode, PrintedBallot};
use crate::board::{BoardIndex, BoardLog, CastReceipt, PostKind};
use crate::cce;
use crate::disputes::{adjudicate, file_challenge, Verdict};
use crate::hash::Bytes32;
use crate::manifest::ElectionManifest;
use crate::remotevote::{check_reveal, compare_image, reconstruct_partial_image, select_spoil_column, Column, ImageError};
use crate::tally::{aggregate_public, combine_all, contest_columns, run_method, selections, verify_mix, Marks, Openings};
use crate::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeOutcome {
    pub challenge_seq: u64,
    /// `None` while the response window is still open.
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub disputes: Vec<DisputeOutcome>,
    /// Ballots the authority disclaimed: an upper bound on undetected cheating.
    pub disclaimed: u64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.as_str()).collect()
    }
}

/// Every check, with the post kinds it consumes.
pub const CHECKS: &[(&str, &[PostKind])] = &[
    ("chain", &PostKind::ALL),
    ("advance_commitment", &[PostKind::BallotPublication, PostKind::PairRecord, PostKind::BeaconRecord, PostKind::CastReceipt]),
    ("publications", &[PostKind::BallotPublication]),
    ("pairs", &[PostKind::PairRecord]),
    ("spoil_compliance", &[PostKind::BeaconRecord, PostKind::SpoilReveal]),
    ("spoiled_columns", &[PostKind::SpoilReveal]),
    ("receipt_columns", &[PostKind::CastReceipt]),
    ("receipt_exclusivity", &[PostKind::CastReceipt, PostKind::ScratchNotice]),
    ("grace_spoils", &[PostKind::GraceSpoil, PostKind::ScratchNotice, PostKind::Disclaimer]),
    ("aggregation", &[PostKind::MixRecord, PostKind::CastReceipt, PostKind::GraceSpoil]),
    ("mixes", &[PostKind::MixRecord]),
    ("decryptions", &[PostKind::DecryptionRecord]),
    ("openings", &[PostKind::OpeningRecord]),
    ("tally", &[PostKind::TallyRecord]),
    ("eligibility", &[PostKind::VoterListRecord, PostKind::CastReceipt, PostKind::GraceSpoil]),
    ("disputes", &[PostKind::ChallengeRecord, PostKind::ResponseRecord]),
    ("disclaimers", &[PostKind::Disclaimer]),
];

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Beacon the verifier obtained independently; must match the board's.
    pub beacon: Option<Vec<u8>>,
}

struct Ctx<'a> {
    m: &'a ElectionManifest,
    board: &'a BoardLog,
    ix: BoardIndex,
    opts: &'a VerifyOptions,
}

type Findings = Vec<String>;

/// Runs every check. Needs only the manifest and the public board.
pub fn verify_election(manifest: &ElectionManifest, board: &BoardLog, opts: &VerifyOptions) -> VerificationReport {
    let ix = match BoardIndex::build(board) {
        Ok(ix) => ix,
        Err(e) => {
            let mut checks: Vec<CheckResult> = CHECKS
                .iter()
                .map(|(n, _)| CheckResult { name: n.to_string(), status: Status::Fail, details: vec!["board not decodable".into()] })
                .collect();
            checks[0].details = vec![e.to_string()];
            return VerificationReport { checks, disputes: Vec::new(), disclaimed: 0 };
        }
    };
    let cx = Ctx { m: manifest, board, ix, opts };
    let (dispute_findings, disputes) = cx.disputes();
    let mut results: Vec<(&str, Findings)> = vec![
        ("chain", cx.chain()),
        ("advance_commitment", cx.advance_commitment()),
        ("publications", cx.publications()),
        ("pairs", cx.pairs()),
        ("spoil_compliance", cx.spoil_compliance()),
        ("spoiled_columns", cx.spoiled_columns()),
        ("receipt_columns", cx.receipt_columns()),
        ("receipt_exclusivity", cx.receipt_exclusivity()),
        ("grace_spoils", cx.grace_spoils()),
        ("aggregation", cx.aggregation()),
        ("mixes", cx.mixes()),
    ];
    let (dec, combined) = cx.decryptions();
    results.push(("decryptions", dec));
    let (op, opened) = cx.openings(&combined);
    results.push(("openings", op));
    results.push(("tally", cx.tally(&opened)));
    results.push(("eligibility", cx.eligibility()));
    results.push(("disputes", dispute_findings));
    results.push(("disclaimers", cx.disclaimers()));
    debug_assert_eq!(results.len(), CHECKS.len());
    let checks = results
        .into_iter()
        .map(|(name, details)| CheckResult {
            name: name.into(),
            status: if details.is_empty() { Status::Pass } else { Status::Fail },
            details,
        })
        .collect();
    VerificationReport { checks, disputes, disclaimed: cx.ix.disclaimers.len() as u64 }
}

impl Ctx<'_> {
    fn first_seq(&self, kind: PostKind) -> Option<u64> {
        self.board.posts().iter().find(|p| p.kind == kind).map(|p| p.seq)
    }

    fn chain(&self) -> Findings {
        match self.board.verify_chain() {
            Ok(()) if self.board.is_empty() => vec!["board is empty".into()],
            Ok(()) => Vec::new(),
            Err(seq) => vec![format!("hash chain broken at post {seq}")],
        }
    }

    fn advance_commitment(&self) -> Findings {
        let mut out = Vec::new();
        let deadline = [self.first_seq(PostKind::BeaconRecord), self.first_seq(PostKind::CastReceipt)].into_iter().flatten().min();
        if let Some(deadline) = deadline {
            for (seq, p) in self.ix.publications.values() {
                if *seq > deadline {
                    out.push(format!("ballot {} published at {seq}, after post {deadline}", p.longcode));
                }
            }
            for (seq, p) in &self.ix.pair_list {
                if *seq > deadline {
                    out.push(format!("pair {} formed at {seq}, after post {deadline}", p.ballot_id));
                }
            }
        }
        for seq in &self.ix.republished {
            out.push(format!("ballot republished at {seq}"));
        }
        out
    }

    fn publications(&self) -> Findings {
        let mut out = Vec::new();
        let n = self.m.codes.shortcode_hex_chars;
        let sections = self.m.sections();
        for (_, p) in self.ix.publications.values() {
            let mut bad = |why: String| out.push(format!("ballot {}: {why}", p.longcode));
            if p.sections.len() != sections.len() {
                bad("wrong number of sections".into());
                continue;
            }
            for (sec, face) in sections.iter().zip(&p.sections) {
                if face.section != sec.id || face.candidates.len() != sec.candidates || face.abstentions.len() != sec.k {
                    bad(format!("section {} has the wrong shape", sec.id));
                    continue;
                }
                if face.candidates.iter().any(|c| c.shortcode != derive_shortcode(&c.commitment, &sec.id, n)) {
                    bad(format!("section {} has a shortcode not derived from its commitment", sec.id));
                }
                let codes: BTreeSet<&str> = face.candidates.iter().map(|c| c.shortcode.as_str()).collect();
                if codes.len() != face.candidates.len() {
                    bad(format!("section {} repeats a shortcode", sec.id));
                }
                let enc: Vec<Vec<u8>> = face.candidates.iter().map(|c| c.commitment.encode()).collect();
                let abs: Vec<Vec<u8>> = face.abstentions.iter().map(|a| a.encode()).collect();
                if !enc.windows(2).all(|w| w[0] < w[1]) || !abs.windows(2).all(|w| w[0] < w[1]) {
                    bad(format!("section {} is not in public order", sec.id));
                }
            }
            if derive_longcode(&p.sections) != p.longcode {
                bad("longcode does not match the published cells".into());
            }
        }
        out
    }

    fn pairs(&self) -> Findings {
        let mut out = Vec::new();
        let mut used: BTreeMap<Bytes32, Bytes32> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for (seq, p) in &self.ix.pair_list {
            if !ids.insert(p.ballot_id) {
                out.push(format!("pair {} posted twice (at {seq})", p.ballot_id));
            }
            if p.ballot_id != derive_pair_id(&p.a, &p.b) {
                out.push(format!("pair {} id does not match its columns", p.ballot_id));
            }
            if p.a == p.b {
                out.push(format!("pair {} uses one ballot twice", p.ballot_id));
            }
            for col in [p.a, p.b] {
                if let Some(prev) = used.insert(col, p.ballot_id) {
                    if prev != p.ballot_id {
                        out.push(format!("ballot {col} is in pairs {prev} and {}", p.ballot_id));
                    }
                }
            }
            let (Some(a), Some(b)) = (self.ix.publication(&p.a), self.ix.publication(&p.b)) else {
                out.push(format!("pair {} names an unpublished ballot", p.ballot_id));
                continue;
            };
            for (sa, sb) in a.sections.iter().zip(&b.sections) {
                let ca: BTreeSet<&str> = sa.candidates.iter().map(|c| c.shortcode.as_str()).collect();
                if sb.candidates.iter().any(|c| ca.contains(c.shortcode.as_str())) {
                    out.push(format!("pair {} shares a shortcode in section {}", p.ballot_id, sa.section));
                }
            }
        }
        out
    }

    fn spoil_compliance(&self) -> Findings {
        let mut out = Vec::new();
        if self.ix.beacons.len() > 1 {
            out.push(format!("{} beacons posted", self.ix.beacons.len()));
        }
        let beacon = self.ix.beacon();
        if let (Some(mine), Some((_, b))) = (&self.opts.beacon, beacon) {
            if mine != &b.beacon {
                out.push("board beacon differs from the independently obtained beacon".into());
            }
        }
        let mut per_pair: BTreeMap<Bytes32, Vec<(u64, Column, Bytes32)>> = BTreeMap::new();
        for (seq, r) in &self.ix.reveals {
            if !self.ix.pairs.contains_key(&r.ballot_id) {
                out.push(format!("reveal at {seq} for unknown pair {}", r.ballot_id));
                continue;
            }
            per_pair.entry(r.ballot_id).or_default().push((*seq, r.column, r.longcode));
        }
        let Some((beacon_seq, b)) = beacon else {
            if !self.ix.reveals.is_empty() {
                out.push("columns revealed with no beacon".into());
            }
            if !self.ix.pairs.is_empty() && (!self.ix.receipts.is_empty() || !self.ix.tallies.is_empty()) {
                out.push("paired ballots cast with no beacon".into());
            }
            return out;
        };
        for (id, (_, p)) in &self.ix.pairs {
            let rule = select_spoil_column(&b.beacon, id);
            match per_pair.get(id).map(|v| v.as_slice()).unwrap_or(&[]) {
                [] => out.push(format!("pair {id} has no spoiled column")),
                [(seq, col, lc)] => {
                    if *col != rule {
                        out.push(format!("pair {id} spoiled column {col:?}, beacon selects {rule:?}"));
                    }
                    if *lc != [p.a, p.b][col.index()] {
                        out.push(format!("pair {id} reveal names the wrong ballot"));
                    }
                    if seq < beacon_seq {
                        out.push(format!("pair {id} revealed before the beacon"));
                    }
                }
                many => out.push(format!("pair {id} has {} reveals", many.len())),
            }
        }
        out
    }

    fn spoiled_columns(&self) -> Findings {
        self.ix
            .reveals
            .iter()
            .filter_map(|(seq, r)| match self.ix.publication(&r.longcode) {
                None => Some(format!("reveal at {seq} names unpublished ballot {}", r.longcode)),
                Some(p) => check_reveal(self.m, r, p)
                    .err()
                    .map(|e| format!("pair {} column {:?}: {} {:?}", r.ballot_id, r.column, e.reason, e.sections)),
            })
            .collect()
    }

    /// The column a physical ballot must be cast from.
    fn expected_cast_column(&self, id: &Bytes32) -> Option<Bytes32> {
        let cols = self.ix.columns(id)?;
        if cols.len() == 1 {
            return Some(cols[0]);
        }
        let spoiled = match self.ix.reveal_for(id) {
            Some(r) => r.column,
            None => select_spoil_column(&self.ix.beacon()?.1.beacon, id),
        };
        Some(cols[spoiled.other().index()])
    }

    fn receipt_columns(&self) -> Findings {
        let mut out = Vec::new();
        for (seq, r) in &self.ix.receipts {
            match self.expected_cast_column(&r.ballot_id) {
                None => out.push(format!("receipt at {seq}: ballot {} has no castable column", r.ballot_id)),
                Some(c) if c != r.column => out.push(format!("receipt at {seq}: ballot {} cast from the wrong column", r.ballot_id)),
                Some(_) => {}
            }
            if let Some(p) = self.ix.publication(&r.column) {
                if let Err(e) = aggregate_public(self.m, &p.sections, &r.codes) {
                    out.push(format!("receipt at {seq}: {e}"));
                }
            }
        }
        out
    }

    fn receipt_exclusivity(&self) -> Findings {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (seq, r) in &self.ix.receipts {
            if !seen.insert(r.ballot_id) {
                out.push(format!("ballot {} has a second receipt at {seq}", r.ballot_id));
            }
            if self.ix.notice_for(&r.ballot_id).is_some() {
                out.push(format!("ballot {} has both a receipt and a scratch notice", r.ballot_id));
            }
        }
        let mut noticed = BTreeSet::new();
        for (seq, n) in &self.ix.notices {
            if !noticed.insert(n.ballot_id) {
                out.push(format!("ballot {} has a second scratch notice at {seq}", n.ballot_id));
            }
            if self.ix.columns(&n.ballot_id).is_none() {
                out.push(format!("scratch notice at {seq} for unknown ballot {}", n.ballot_id));
            }
        }
        out
    }

    fn grace_spoils(&self) -> Findings {
        let mut out = Vec::new();
        let first_mix = self.first_seq(PostKind::MixRecord).unwrap_or(u64::MAX);
        let receipt_columns: BTreeSet<Bytes32> = self.ix.receipts.iter().map(|(_, r)| r.column).collect();
        let mut ids = BTreeSet::new();
        let mut cols = BTreeSet::new();
        for (seq, g) in &self.ix.grace_spoils {
            let disclaimer = self.ix.disclaimers.iter().find(|(_, d)| d.ballot_id == g.ballot_id);
            let until = match (self.ix.notice_for(&g.ballot_id), disclaimer) {
                (Some((_, n)), _) => n.grace_until,
                (None, Some((_, d))) => {
                    if !self.ix.receipts_for(&g.ballot_id).iter().any(|r| r.column == g.spoiled) {
                        out.push(format!("grace spoil at {seq} withdraws a column other than the disclaimed ballot's"));
                    }
                    d.grace_until
                }
                (None, None) => {
                    out.push(format!("grace spoil at {seq} for ballot {} with no notice or disclaimer", g.ballot_id));
                    continue;
                }
            };
            if *seq > until {
                out.push(format!("grace spoil at {seq} after its window closed at {until}"));
            }
            if *seq > first_mix {
                out.push(format!("grace spoil at {seq} after mixing began"));
            }
            if !receipt_columns.contains(&g.spoiled) {
                out.push(format!("grace spoil at {seq} withdraws a column that was never cast"));
            }
            if !ids.insert(g.ballot_id) || !cols.insert(g.spoiled) {
                out.push(format!("grace spoil at {seq} repeats an earlier one"));
            }
        }
        out
    }

    fn expected_rows(&self) -> Result<Vec<Vec<Element>>, String> {
        self.ix
            .counted_receipts()
            .into_iter()
            .map(|r: &CastReceipt| {
                let p = self.ix.publication(&r.column).ok_or_else(|| format!("receipt names unpublished ballot {}", r.column))?;
                aggregate_public(self.m, &p.sections, &r.codes).map_err(|e| e.to_string())
            })
            .collect()
    }

    fn aggregation(&self) -> Findings {
        if self.ix.mixes.is_empty() && self.ix.tallies.is_empty() {
            return Vec::new();
        }
        let rows = match self.expected_rows() {
            Ok(r) => r,
            Err(e) => return vec![e],
        };
        let mut out = Vec::new();
        for (ci, contest) in self.m.contests.iter().enumerate() {
            let mixes: Vec<_> = self.ix.mixes.iter().filter(|(_, mx)| mx.contest == contest.id).collect();
            let [(seq, mx)] = mixes.as_slice() else {
                out.push(format!("contest {} has {} mixes", contest.id, mixes.len()));
                continue;
            };
            let cols = contest_columns(self.m, ci);
            let expected: Vec<Vec<Element>> = rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
            if mx.input != expected {
                out.push(format!("mix at {seq} input differs from the receipts' aggregates"));
            }
        }
        for (seq, mx) in &self.ix.mixes {
            if self.m.contest(&mx.contest).is_none() {
                out.push(format!("mix at {seq} for unknown contest {}", mx.contest));
            }
        }
        out
    }

    fn mixes(&self) -> Findings {
        let mut out = Vec::new();
        let rounds = self.m.options.mix_rounds as usize;
        for (seq, mx) in &self.ix.mixes {
            let prev = self.board.posts()[*seq as usize].prev_hash;
            if mx.board_head != prev {
                out.push(format!("mix at {seq} is bound to a stale board head"));
            }
            if let Err(e) = verify_mix(&self.m.group, &mx.input, &mx.output, &mx.proof, &mx.board_head, rounds) {
                out.push(format!("mix at {seq}: {e}"));
            }
        }
        out
    }

    fn mix_output(&self, contest: &str) -> Option<&Vec<Vec<Element>>> {
        self.ix.mixes.iter().find(|(_, m)| m.contest == contest).map(|(_, m)| &m.output)
    }

    fn decryptions(&self) -> (Findings, BTreeMap<String, Vec<Vec<Element>>>) {
        let mut out = Vec::new();
        let mut combined = BTreeMap::new();
        for (seq, d) in &self.ix.decryptions {
            let Some(output) = self.mix_output(&d.contest) else {
                out.push(format!("decryption at {seq} for unmixed contest {}", d.contest));
                continue;
            };
            let shape_ok = d.ciphertexts.len() == output.len() && d.ciphertexts.iter().zip(output).all(|(a, b)| a.len() == b.len());
            if !shape_ok {
                out.push(format!("decryption at {seq} does not match the mix output shape"));
                continue;
            }
            match combine_all(&self.m.group, &self.m.trustees, &d.ciphertexts, &d.shares) {
                Ok(s) => {
                    if combined.insert(d.contest.clone(), s).is_some() {
                        out.push(format!("contest {} decrypted twice", d.contest));
                    }
                }
                Err((r, c, e)) => out.push(format!("decryption at {seq}, row {r}, column {c}: {e}")),
            }
        }
        if !self.ix.tallies.is_empty() {
            for c in &self.m.contests {
                if !combined.contains_key(&c.id) && !self.ix.decryptions.iter().any(|(_, d)| d.contest == c.id) {
                    out.push(format!("contest {} has no decryption", c.id));
                }
            }
        }
        (out, combined)
    }

    fn openings(&self, combined: &BTreeMap<String, Vec<Vec<Element>>>) -> (Findings, BTreeMap<String, Openings>) {
        let mut out = Vec::new();
        let mut opened = BTreeMap::new();
        for (seq, o) in &self.ix.openings {
            let Some((ci, _)) = self.m.contest(&o.contest) else {
                out.push(format!("opening at {seq} for unknown contest {}", o.contest));
                continue;
            };
            let (Some(output), Some(s)) = (self.mix_output(&o.contest), combined.get(&o.contest)) else {
                out.push(format!("opening at {seq} has no verified decryption"));
                continue;
            };
            if o.openings.len() != output.len() || o.openings.iter().zip(output).any(|(a, b)| a.len() != b.len()) {
                out.push(format!("opening at {seq} does not match the mix output shape"));
                continue;
            }
            let sections = self.m.contest_sections(ci);
            let mut values = Vec::new();
            for (i, row) in o.openings.iter().enumerate() {
                let mut vals = Vec::new();
                for (c, cell) in row.iter().enumerate() {
                    if cell.s_elem != s[i][c] {
                        out.push(format!("opening at {seq}, row {i}: S differs from the decryption"));
                    }
                    let valid = sections[c].valid_totals();
                    let ok = match cell.m {
                        Some(m) => valid.contains(&m) && cce::check_opening(&self.m.group, &output[i][c], &cell.s_elem, m).unwrap_or(false),
                        None => cce::open(&self.m.group, &output[i][c], &cell.s_elem, &valid).is_err(),
                    };
                    if !ok {
                        out.push(format!("opening at {seq}, row {i}, column {c} does not verify"));
                    }
                    vals.push(cell.m);
                }
                values.push(vals);
            }
            opened.insert(o.contest.clone(), values);
        }
        if !self.ix.tallies.is_empty() {
            for c in &self.m.contests {
                if !self.ix.openings.iter().any(|(_, o)| o.contest == c.id) {
                    out.push(format!("contest {} has no opening", c.id));
                }
            }
        }
        (out, opened)
    }

    fn tally(&self, opened: &BTreeMap<String, Openings>) -> Findings {
        let mut out = Vec::new();
        if self.ix.tallies.len() > 1 {
            out.push(format!("{} tally records", self.ix.tallies.len()));
        }
        let Some((seq, t)) = self.ix.tallies.first() else {
            return out;
        };
        let expected: Vec<_> = self
            .m
            .contests
            .iter()
            .enumerate()
            .filter_map(|(ci, c)| opened.get(&c.id).map(|v| run_method(c, &self.m.contest_sections(ci), v)))
            .collect();
        if t.results != expected {
            out.push(format!("tally at {seq} differs from the recomputed result"));
        }
        out
    }

    fn eligibility(&self) -> Findings {
        let Some((_, list)) = self.ix.voter_lists.last() else {
            return vec!["no voter list".into()];
        };
        let counted = self.ix.receipts.len() as i64 - self.ix.grace_spoils.len() as i64;
        let voters = list.voters as i64;
        let done = !self.ix.tallies.is_empty();
        if (done && counted != voters) || counted > voters {
            return vec![format!("{counted} counted receipts for {voters} voters")];
        }
        Vec::new()
    }

    fn disputes(&self) -> (Findings, Vec<DisputeOutcome>) {
        let mut out = Vec::new();
        let mut outcomes = Vec::new();
        let window = self.m.options.dispute_window;
        for (seq, ch) in &self.ix.challenges {
            if file_challenge(self.m, &self.ix, ch.evidence.clone(), ch.signature).is_err() {
                // a void challenge; the authority owes nothing
                outcomes.push(DisputeOutcome { challenge_seq: *seq, verdict: Some(Verdict::AuthorityVindicated) });
                continue;
            }
            let response = self.ix.responses.iter().find(|(rs, r)| r.challenge_seq == *seq && *rs <= seq + window);
            let verdict = match response {
                Some((_, r)) => Some(adjudicate(self.m, &self.ix, ch, r)),
                None if self.ix.len > seq + window + 1 => Some(Verdict::ResponseInvalid),
                None => None,
            };
            match verdict {
                Some(Verdict::VoterProven) => out.push(format!("challenge at {seq}: voter proven")),
                Some(Verdict::ResponseInvalid) => out.push(format!("challenge at {seq}: no valid response")),
                _ => {}
            }
            outcomes.push(DisputeOutcome { challenge_seq: *seq, verdict });
        }
        for (seq, r) in &self.ix.responses {
            if !self.ix.challenges.iter().any(|(cs, _)| *cs == r.challenge_seq) {
                out.push(format!("response at {seq} answers no challenge"));
            }
        }
        (out, outcomes)
    }

    fn disclaimers(&self) -> Findings {
        let tally = self.ix.tally_seq().unwrap_or(u64::MAX);
        self.ix
            .disclaimers
            .iter()
            .filter(|(seq, _)| *seq > tally)
            .map(|(seq, d)| format!("disclaimer at {seq} for {} after results", d.ballot_id))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Individual voter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoterFinding {
    /// A scratch notice for a ballot returned with its cast column intact.
    UnexpectedNotice,
    /// A receipt for a ballot returned with its cast column scratched.
    ReceiptForScratched,
    WrongColumn,
    ReceiptMismatch { section: String },
    MissingReveal,
    ForgedReveal { reason: String },
    ImageMismatch { rows: Vec<(String, usize)> },
    BadMarks(String),
}

/// What a voter learns by comparing their paper ballot and marks with the board.
///
/// A missing receipt is not reported: the voter cannot tell it from a ballot
/// still in the post. Eligibility catches dropped ballots in aggregate.
pub fn voter_check(manifest: &ElectionManifest, board: &BoardLog, printed: &PrintedBallot, marks: &Marks) -> Vec<VoterFinding> {
    let Ok(ix) = BoardIndex::build(board) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let id = printed.ballot_id;
    let paired = printed.column_ids.len() == 2;

    let cast_col = if paired {
        match reconstruct_partial_image(manifest, &ix, &id) {
            Ok(image) => {
                let rows = compare_image(&image, printed);
                if !rows.is_empty() {
                    out.push(VoterFinding::ImageMismatch { rows });
                }
                Some(image.column.other().index())
            }
            Err(ImageError::Forgery(e)) => {
                out.push(VoterFinding::ForgedReveal { reason: e.reason });
                None
            }
            Err(_) => {
                if ix.beacon().is_some() {
                    out.push(VoterFinding::MissingReveal);
                }
                None
            }
        }
    } else {
        Some(0)
    };

    let scratched = cast_col.is_some_and(|c| !printed.scratch_state(c).intact);
    if ix.notice_for(&id).is_some() && !scratched {
        out.push(VoterFinding::UnexpectedNotice);
    }
    let receipts = ix.receipts_for(&id);
    let Some(receipt) = receipts.first() else {
        return out;
    };
    if scratched {
        out.push(VoterFinding::ReceiptForScratched);
    }
    let found = printed.column_ids.iter().position(|c| *c == receipt.column);
    let col = match (found, cast_col) {
        (Some(f), Some(c)) if f == c => f,
        (Some(f), None) => f,
        _ => {
            out.push(VoterFinding::WrongColumn);
            return out;
        }
    };
    let sel = match selections(manifest, marks) {
        Ok(s) => s,
        Err(e) => {
            out.push(VoterFinding::BadMarks(e.to_string()));
            return out;
        }
    };
    for sec in manifest.sections() {
        let mut expected: Vec<String> = sel
            .get(&sec.id)
            .into_iter()
            .flatten()
            .filter_map(|&j| printed.code(&sec.id, j, col).map(str::to_string))
            .collect();
        expected.sort();
        let posted = receipt.codes.get(&sec.id).cloned().unwrap_or_default();
        if expected != posted {
            out.push(VoterFinding::ReceiptMismatch { section: sec.id.clone() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_post_kind_is_consumed() {
        for kind in PostKind::ALL {
            assert!(
                CHECKS.iter().skip(1).any(|(_, kinds)| kinds.contains(&kind)),
                "{kind:?} is read by no check"
            );
        }
        let names: BTreeSet<&str> = CHECKS.iter().map(|(n, _)| *n).collect();
        assert_eq!(names.len(), CHECKS.len());
    }
}
