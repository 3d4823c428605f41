//! Cast processing, per-ballot aggregation, the cut-and-choose mix, opening
//! and decoding, and the counting methods.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::{Backend, GroupElement, GroupId, ScalarField};
use crate::ballot::{EncryptedBallot, PublicSection};
use crate::cce::{self, rerandomize_commitment};
use crate::elgamal::{self, ElGamalError};
use crate::hash::{expand, Bytes32};
use crate::manifest::{Contest, ElectionManifest, Method, Section};
use crate::{Cell, Ciphertext, Group, DecryptionShare, Element, Params, Scalar, TrusteeKeys, TrusteeShare};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TallyError {
    #[error("unknown contest {0}")]
    UnknownContest(String),
    #[error("section {0}: more than the allowed number of selections")]
    Overvote(String),
    #[error("section {0}: candidate selected twice")]
    DuplicateSelection(String),
    #[error("section {0}: no candidate {1}")]
    UnknownCandidate(String, usize),
    #[error("section {0}: code {1} is not on the ballot")]
    UnknownCode(String, String),
    #[error("ballot has no section {0}")]
    MissingSection(String),
}

// ---------------------------------------------------------------------------
// Vote encoding
// ---------------------------------------------------------------------------

/// Every packed total of at most `k` distinct candidates out of `c`, sorted.
pub fn valid_set(c: usize, k: usize) -> Vec<u64> {
    let base = k as u64 + 1;
    let weights: Vec<u64> = (0..c).map(|j| base.pow(j as u32)).collect();
    let mut out = BTreeSet::new();
    for mask in 0u64..(1 << c) {
        if (mask.count_ones() as usize) <= k {
            out.insert((0..c).filter(|j| mask >> j & 1 == 1).map(|j| weights[j]).sum());
        }
    }
    out.into_iter().collect()
}

/// The unique selection `S` with `|S| ≤ k` and `Σ_{j∈S} (k+1)^j = m`, if any.
pub fn decode(m: u64, c: usize, k: usize) -> Option<Vec<usize>> {
    let base = k as u64 + 1;
    let mut rest = m;
    let mut out = Vec::new();
    for j in 0..c {
        match rest % base {
            0 => {}
            1 => out.push(j),
            _ => return None,
        }
        rest /= base;
    }
    (rest == 0 && out.len() <= k).then_some(out)
}

// ---------------------------------------------------------------------------
// Marks and cast processing
// ---------------------------------------------------------------------------

/// A voter's marks: contest id to selected candidate indices, or to the
/// ranking (first preference first) for ranked contests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marks(pub BTreeMap<String, Vec<usize>>);

impl Marks {
    pub fn with(mut self, contest: &str, choices: &[usize]) -> Self {
        self.0.insert(contest.into(), choices.to_vec());
        self
    }
}

/// Per-section selections, keyed by section id; every section is present.
pub type Selections = BTreeMap<String, Vec<usize>>;

/// Validates marks against the manifest and splits them into sections.
pub fn selections(manifest: &ElectionManifest, marks: &Marks) -> Result<Selections, TallyError> {
    for id in marks.0.keys() {
        if manifest.contest(id).is_none() {
            return Err(TallyError::UnknownContest(id.clone()));
        }
    }
    let mut out = Selections::new();
    for (ci, contest) in manifest.contests.iter().enumerate() {
        let chosen = marks.0.get(&contest.id).cloned().unwrap_or_default();
        let distinct: BTreeSet<_> = chosen.iter().collect();
        if distinct.len() != chosen.len() {
            return Err(TallyError::DuplicateSelection(contest.id.clone()));
        }
        if let Some(&bad) = chosen.iter().find(|&&j| j >= contest.candidates.len()) {
            return Err(TallyError::UnknownCandidate(contest.id.clone(), bad));
        }
        let sections = manifest.contest_sections(ci);
        match contest.method {
            Method::Plurality { selections } => {
                if chosen.len() > selections {
                    return Err(TallyError::Overvote(contest.id.clone()));
                }
                let mut sorted = chosen;
                sorted.sort_unstable();
                out.insert(sections[0].id.clone(), sorted);
            }
            Method::Irv { ranks } => {
                if chosen.len() > ranks {
                    return Err(TallyError::Overvote(contest.id.clone()));
                }
                for (r, s) in sections.iter().enumerate() {
                    out.insert(s.id.clone(), chosen.get(r).map(|&j| vec![j]).unwrap_or_default());
                }
            }
        }
    }
    Ok(out)
}

/// Sorted shortcodes of the selected candidates, per section.
pub fn cast_codes(ballot: &EncryptedBallot, sel: &Selections) -> Result<BTreeMap<String, Vec<String>>, TallyError> {
    sel.iter()
        .map(|(id, chosen)| {
            let s = ballot.section(id).ok_or_else(|| TallyError::MissingSection(id.clone()))?;
            let mut codes: Vec<String> = chosen.iter().map(|&j| s.shortcodes[j].clone()).collect();
            codes.sort();
            Ok((id.clone(), codes))
        })
        .collect()
}

/// One aggregate cell per section in manifest order: the selected cells plus
/// enough abstention cells, taken in published order, to make exactly `k`.
pub fn aggregate_cells(manifest: &ElectionManifest, ballot: &EncryptedBallot, sel: &Selections) -> Result<Vec<Cell>, TallyError> {
    manifest
        .sections()
        .iter()
        .map(|sec| {
            let cells = ballot.section(&sec.id).ok_or_else(|| TallyError::MissingSection(sec.id.clone()))?;
            let chosen = sel.get(&sec.id).map(|v| v.as_slice()).unwrap_or(&[]);
            if chosen.len() > sec.k {
                return Err(TallyError::Overvote(sec.id.clone()));
            }
            let fill = ballot.abstentions_in_public_order(&sec.id);
            let picked = chosen.iter().map(|&j| &cells.candidates[j]).chain(fill.iter().take(sec.k - chosen.len()));
            Ok(cce::sum(picked))
        })
        .collect()
}

/// The commitment side of [`aggregate_cells`], computed from public data and
/// a receipt's codes.
pub fn aggregate_public(
    manifest: &ElectionManifest,
    face: &[PublicSection],
    codes: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<Element>, TallyError> {
    manifest
        .sections()
        .iter()
        .map(|sec| {
            let published = face
                .iter()
                .find(|p| p.section == sec.id)
                .ok_or_else(|| TallyError::MissingSection(sec.id.clone()))?;
            let chosen = codes.get(&sec.id).map(|v| v.as_slice()).unwrap_or(&[]);
            if chosen.len() > sec.k || published.abstentions.len() < sec.k {
                return Err(TallyError::Overvote(sec.id.clone()));
            }
            if chosen.iter().collect::<BTreeSet<_>>().len() != chosen.len() {
                return Err(TallyError::DuplicateSelection(sec.id.clone()));
            }
            let mut acc = Group::identity(GroupId::G2);
            for code in chosen {
                let c = published
                    .commitment_for_code(code)
                    .ok_or_else(|| TallyError::UnknownCode(sec.id.clone(), code.clone()))?;
                acc = acc * *c;
            }
            for a in &published.abstentions[..sec.k - chosen.len()] {
                acc = acc * *a;
            }
            Ok(acc)
        })
        .collect()
}

/// Positions, within a full per-ballot section list, of contest `ci`'s sections.
pub fn contest_columns(manifest: &ElectionManifest, ci: usize) -> Vec<usize> {
    manifest
        .sections()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.contest == ci)
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// Mix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MixError {
    #[error("a mix needs at least two rows")]
    TooFewRows,
    #[error("rows have inconsistent shapes")]
    Shape,
    #[error("expected {expected} rounds, proof has {found}")]
    RoundCount { expected: usize, found: usize },
    #[error("round {0}: revealed permutation is malformed")]
    BadPermutation(usize),
    #[error("round {0}: revealed link does not reconnect")]
    Link(usize),
}

/// A revealed permutation with per-cell commitment re-randomizers.
///
/// For challenge bit 0 it maps input row `i` to intermediate row `perm[i]`;
/// for bit 1 it maps intermediate row `j` to output row `perm[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixLink {
    pub perm: Vec<u32>,
    pub rerand: Vec<Vec<Scalar>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixRound {
    pub intermediate: Vec<Vec<Element>>,
    pub link: MixLink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixProof {
    pub rounds: Vec<MixRound>,
}

fn encode_rows(rows: &[Vec<Element>]) -> Vec<u8> {
    let mut out = (rows.len() as u64).to_be_bytes().to_vec();
    out.extend((rows.first().map_or(0, |r| r.len()) as u64).to_be_bytes());
    for e in rows.iter().flatten() {
        out.extend(e.encode());
    }
    out
}

/// Fiat–Shamir challenge bits over the context and the whole transcript.
pub fn challenge_bits(context: &Bytes32, input: &[Vec<Element>], output: &[Vec<Element>], intermediates: &[&[Vec<Element>]]) -> Vec<bool> {
    let mut parts = vec![context.0.to_vec(), encode_rows(input), encode_rows(output)];
    parts.extend(intermediates.iter().map(|m| encode_rows(m)));
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    let n = intermediates.len();
    let bytes = expand("rv/mixchal", &refs, n.div_ceil(8));
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

fn random_perm<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut p: Vec<u32> = (0..n as u32).collect();
    p.shuffle(rng);
    p
}

fn random_matrix<R: RngCore + ?Sized>(n: usize, w: usize, rng: &mut R) -> Vec<Vec<Scalar>> {
    (0..n).map(|_| (0..w).map(|_| Scalar::random(rng)).collect()).collect()
}

fn check_shape<T>(rows: &[Vec<T>], n: usize, w: usize) -> bool {
    rows.len() == n && rows.iter().all(|r| r.len() == w)
}

pub fn public_rows(rows: &[Vec<Cell>]) -> Vec<Vec<Element>> {
    rows.iter().map(|r| r.iter().map(|c| c.commitment).collect()).collect()
}

/// Shuffles whole rows and re-randomizes every cell, proving the shuffle on
/// the commitment side with `rounds` cut-and-choose rounds bound to `context`.
pub fn mix<R: RngCore + ?Sized>(
    params: &Params,
    pk: &Element,
    rows: &[Vec<Cell>],
    rounds: usize,
    context: &Bytes32,
    rng: &mut R,
) -> Result<(Vec<Vec<Cell>>, MixProof), MixError> {
    let n = rows.len();
    if n < 2 {
        return Err(MixError::TooFewRows);
    }
    let w = rows[0].len();
    if !check_shape(rows, n, w) {
        return Err(MixError::Shape);
    }
    let pi = random_perm(n, rng);
    let s = random_matrix(n, w, rng);
    let r = random_matrix(n, w, rng);
    let mut output = vec![Vec::new(); n];
    for i in 0..n {
        output[pi[i] as usize] = (0..w).map(|c| rows[i][c].rerandomize(params, pk, s[i][c], r[i][c])).collect();
    }
    let input_pub = public_rows(rows);
    let output_pub = public_rows(&output);

    let mut secrets = Vec::with_capacity(rounds);
    let mut intermediates = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let sigma = random_perm(n, rng);
        let a = random_matrix(n, w, rng);
        let mut inter = vec![Vec::new(); n];
        for i in 0..n {
            inter[sigma[i] as usize] = (0..w).map(|c| rerandomize_commitment(params, &input_pub[i][c], &a[i][c])).collect();
        }
        secrets.push((sigma, a));
        intermediates.push(inter);
    }
    let views: Vec<&[Vec<Element>]> = intermediates.iter().map(|m| m.as_slice()).collect();
    let bits = challenge_bits(context, &input_pub, &output_pub, &views);

    let rounds = intermediates
        .into_iter()
        .zip(secrets)
        .zip(bits)
        .map(|((intermediate, (sigma, a)), bit)| {
            let link = if !bit {
                MixLink { perm: sigma, rerand: a }
            } else {
                let mut perm = vec![0u32; n];
                let mut rerand = vec![Vec::new(); n];
                for i in 0..n {
                    let j = sigma[i] as usize;
                    perm[j] = pi[i];
                    rerand[j] = (0..w).map(|c| s[i][c] - a[i][c]).collect();
                }
                MixLink { perm, rerand }
            };
            MixRound { intermediate, link }
        })
        .collect();
    Ok((output, MixProof { rounds }))
}

/// Recomputes the challenge bits and checks every revealed link.
pub fn verify_mix(
    params: &Params,
    input: &[Vec<Element>],
    output: &[Vec<Element>],
    proof: &MixProof,
    context: &Bytes32,
    expected_rounds: usize,
) -> Result<(), MixError> {
    let n = input.len();
    if n < 2 {
        return Err(MixError::TooFewRows);
    }
    let w = input[0].len();
    if !check_shape(input, n, w) || !check_shape(output, n, w) {
        return Err(MixError::Shape);
    }
    if proof.rounds.len() != expected_rounds {
        return Err(MixError::RoundCount { expected: expected_rounds, found: proof.rounds.len() });
    }
    if proof.rounds.iter().any(|r| !check_shape(&r.intermediate, n, w)) {
        return Err(MixError::Shape);
    }
    let views: Vec<&[Vec<Element>]> = proof.rounds.iter().map(|r| r.intermediate.as_slice()).collect();
    let bits = challenge_bits(context, input, output, &views);
    for (t, (round, bit)) in proof.rounds.iter().zip(bits).enumerate() {
        let link = &round.link;
        let distinct: BTreeSet<u32> = link.perm.iter().copied().collect();
        if link.perm.len() != n || distinct.len() != n || distinct.iter().any(|&p| p as usize >= n) {
            return Err(MixError::BadPermutation(t));
        }
        if !check_shape(&link.rerand, n, w) {
            return Err(MixError::Shape);
        }
        let (from, to) = if bit { (&round.intermediate[..], output) } else { (input, &round.intermediate[..]) };
        for i in 0..n {
            let target = &to[link.perm[i] as usize];
            for c in 0..w {
                if rerandomize_commitment(params, &from[i][c], &link.rerand[i][c]) != target[c] {
                    return Err(MixError::Link(t));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Decryption and opening
// ---------------------------------------------------------------------------

/// Partial decryptions of every ciphertext by each trustee share given.
pub fn partial_decrypt_all(params: &Params, trustees: &[TrusteeShare], cts: &[Vec<Ciphertext>]) -> Vec<Vec<Vec<DecryptionShare>>> {
    cts.iter()
        .map(|row| row.iter().map(|ct| trustees.iter().map(|t| elgamal::partial_decrypt(params, t, ct)).collect()).collect())
        .collect()
}

/// Verifies and combines shares, giving `g1^s` for every cell.
pub fn combine_all(
    params: &Params,
    keys: &TrusteeKeys,
    cts: &[Vec<Ciphertext>],
    shares: &[Vec<Vec<DecryptionShare>>],
) -> Result<Vec<Vec<Element>>, (usize, usize, ElGamalError)> {
    if cts.len() != shares.len() {
        return Err((cts.len().min(shares.len()), 0, ElGamalError::TooFewShares { have: 0, need: keys.threshold as usize }));
    }
    cts.iter()
        .zip(shares)
        .enumerate()
        .map(|(i, (row, srow))| {
            if row.len() != srow.len() {
                return Err((i, 0, ElGamalError::TooFewShares { have: 0, need: keys.threshold as usize }));
            }
            row.iter()
                .zip(srow)
                .enumerate()
                .map(|(c, (ct, ds))| elgamal::combine(params, keys, ct, ds).map_err(|e| (i, c, e)))
                .collect()
        })
        .collect()
}

/// Opens each commitment against its decrypted `g1^s` and the section's valid totals.
/// Opened messages per row and column; `None` where no admissible message fits.
pub type Openings = Vec<Vec<Option<u64>>>;

pub fn open_all(params: &Params, sections: &[Section], commitments: &[Vec<Element>], s_elems: &[Vec<Element>]) -> Openings {
    let valid: Vec<Vec<u64>> = sections.iter().map(|s| s.valid_totals()).collect();
    commitments
        .iter()
        .zip(s_elems)
        .map(|(row, srow)| {
            row.iter()
                .zip(srow)
                .zip(&valid)
                .map(|((c, s), v)| cce::open(params, c, s, v).ok().map(|o| o.m))
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrvRound {
    pub counts: Vec<u64>,
    pub eliminated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContestResult {
    pub contest: String,
    pub ballots: usize,
    pub invalid: usize,
    /// Decoded per-section choice sets of every valid ballot, sorted.
    pub choices: Vec<Vec<Vec<usize>>>,
    /// Plurality: votes per candidate. Ranked: first-round first preferences.
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<IrvRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<usize>,
}

/// Decodes one opened row; `None` if any section is invalid.
pub fn decode_row(sections: &[Section], values: &[Option<u64>]) -> Option<Vec<Vec<usize>>> {
    sections.iter().zip(values).map(|(s, v)| v.and_then(|m| decode(m, s.candidates, s.k))).collect()
}

/// Ranking encoded by per-rank choice sets; `None` if a candidate repeats.
pub fn ranking(row: &[Vec<usize>]) -> Option<Vec<usize>> {
    let flat: Vec<usize> = row.iter().flatten().copied().collect();
    let distinct: BTreeSet<_> = flat.iter().collect();
    (distinct.len() == flat.len()).then_some(flat)
}

/// Sequential-elimination instant runoff. Among candidates tied for fewest
/// votes the lowest index is eliminated.
pub fn irv(candidates: usize, ballots: &[Vec<usize>]) -> (Vec<IrvRound>, Option<usize>) {
    let mut continuing = vec![true; candidates];
    let mut rounds = Vec::new();
    loop {
        let mut counts = vec![0u64; candidates];
        for b in ballots {
            if let Some(&top) = b.iter().find(|&&j| continuing[j]) {
                counts[top] += 1;
            }
        }
        let active: u64 = counts.iter().sum();
        let left: Vec<usize> = (0..candidates).filter(|&j| continuing[j]).collect();
        if active == 0 || left.is_empty() {
            rounds.push(IrvRound { counts, eliminated: None });
            return (rounds, None);
        }
        let leader = left.iter().copied().max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
        if counts[leader] * 2 > active || left.len() == 1 {
            rounds.push(IrvRound { counts, eliminated: None });
            return (rounds, Some(leader));
        }
        let loser = left.iter().copied().min_by_key(|&j| (counts[j], j)).unwrap();
        continuing[loser] = false;
        rounds.push(IrvRound { counts, eliminated: Some(loser) });
    }
}

/// Counts a contest from its opened rows.
pub fn run_method(contest: &Contest, sections: &[Section], opened: &[Vec<Option<u64>>]) -> ContestResult {
    let c = contest.candidates.len();
    let mut choices = Vec::new();
    let mut invalid = 0;
    for row in opened {
        let decoded = decode_row(sections, row).filter(|d| !matches!(contest.method, Method::Irv { .. }) || ranking(d).is_some());
        match decoded {
            Some(d) => choices.push(d),
            None => invalid += 1,
        }
    }
    choices.sort();
    let mut result = ContestResult {
        contest: contest.id.clone(),
        ballots: opened.len(),
        invalid,
        choices,
        counts: vec![0; c],
        rounds: Vec::new(),
        winner: None,
    };
    match contest.method {
        Method::Plurality { .. } => {
            for row in &result.choices {
                for &j in row.iter().flatten() {
                    result.counts[j] += 1;
                }
            }
        }
        Method::Irv { .. } => {
            let rankings: Vec<Vec<usize>> = result.choices.iter().filter_map(|r| ranking(r)).collect();
            let (rounds, winner) = irv(c, &rankings);
            result.counts = rounds.first().map(|r| r.counts.clone()).unwrap_or_else(|| vec![0; c]);
            result.rounds = rounds;
            result.winner = winner;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::{generate_encrypted_ballot, RngTrng};
    use crate::testutil::{manifest, seeded};
    use proptest::prelude::*;

    fn brute_force(c: usize, k: usize) -> BTreeMap<u64, Vec<usize>> {
        let mut out = BTreeMap::new();
        for mask in 0u32..(1 << c) {
            let set: Vec<usize> = (0..c).filter(|j| mask >> j & 1 == 1).collect();
            if set.len() <= k {
                let m: u64 = set.iter().map(|&j| (k as u64 + 1).pow(j as u32)).sum();
                assert!(out.insert(m, set).is_none(), "subset sums are unique");
            }
        }
        out
    }

    #[test]
    fn decode_cases() {
        assert_eq!(decode(0, 3, 1), Some(vec![]));
        assert_eq!(decode(10, 3, 2), Some(vec![0, 2]));
        assert_eq!(decode(2, 3, 1), Some(vec![1]));
        assert_eq!(decode(2, 3, 2), None);
        assert_eq!(decode(13, 3, 2), None); // 1+3+9 needs three selections
        assert_eq!(decode(8, 3, 1), None); // beyond the last position
    }

    #[test]
    fn decode_matches_subset_enumeration() {
        for c in 1..=5 {
            for k in 1..=3 {
                let oracle = brute_force(c, k);
                let max = *oracle.keys().max().unwrap();
                assert_eq!(valid_set(c, k), oracle.keys().copied().collect::<Vec<_>>());
                for m in 0..=max {
                    assert_eq!(decode(m, c, k), oracle.get(&m).cloned(), "c={c} k={k} m={m}");
                }
            }
        }
    }

    #[test]
    fn selection_rules() {
        let (m, _) = manifest();
        let sel = selections(&m, &Marks::default().with("mayor", &[2]).with("council", &[1, 0])).unwrap();
        assert_eq!(sel["mayor"], [2]);
        assert_eq!(sel["board"], Vec::<usize>::new());
        assert_eq!(sel["council#1"], [1]);
        assert_eq!(sel["council#2"], [0]);
        let over = Marks::default().with("mayor", &[0, 1]);
        assert_eq!(selections(&m, &over).unwrap_err(), TallyError::Overvote("mayor".into()));
        let dup = Marks::default().with("council", &[1, 1]);
        assert_eq!(selections(&m, &dup).unwrap_err(), TallyError::DuplicateSelection("council".into()));
        assert!(matches!(selections(&m, &Marks::default().with("nope", &[])), Err(TallyError::UnknownContest(_))));
        assert!(matches!(selections(&m, &Marks::default().with("mayor", &[3])), Err(TallyError::UnknownCandidate(..))));
    }

    #[test]
    fn aggregation_totals_and_public_side() {
        let (m, _) = manifest();
        let mut rng = seeded(11);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let face = b.public_sections();
        for (marks, expect) in [
            (Marks::default().with("mayor", &[2]).with("board", &[0, 2]), [4u64, 10, 0, 0]),
            (Marks::default().with("board", &[1]).with("council", &[2, 0]), [0, 3, 4, 1]),
            (Marks::default(), [0, 0, 0, 0]),
        ] {
            let sel = selections(&m, &marks).unwrap();
            let cells = aggregate_cells(&m, &b, &sel).unwrap();
            let totals: Vec<u64> = cells.iter().map(|c| c.opening.unwrap().m).collect();
            assert_eq!(totals, expect);
            let codes = cast_codes(&b, &sel).unwrap();
            let public = aggregate_public(&m, &face, &codes).unwrap();
            assert_eq!(public, cells.iter().map(|c| c.commitment).collect::<Vec<_>>());
        }
    }

    #[test]
    fn abstention_fill_preserves_total() {
        let (m, _) = manifest();
        let mut rng = seeded(12);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let board = b.section("board").unwrap();
        let one = cce::sum([&board.candidates[1]]);
        let filled = cce::sum([&board.candidates[1], &board.abstentions[0]]);
        assert_eq!(one.opening.unwrap().m, filled.opening.unwrap().m);
    }

    fn mixed_rows(seed: u64, n: usize) -> (crate::manifest::ElectionManifest, Vec<TrusteeShare>, Vec<Vec<Cell>>) {
        let (m, shares) = manifest();
        let mut rng = seeded(seed);
        let rows = (0..n)
            .map(|i| {
                let b = generate_encrypted_ballot(&m, i as u64, &mut RngTrng(&mut rng)).unwrap();
                let marks = Marks::default().with("mayor", &[i % 3]).with("board", &[i % 3]);
                aggregate_cells(&m, &b, &selections(&m, &marks).unwrap()).unwrap()
            })
            .collect();
        (m, shares, rows)
    }

    #[test]
    fn honest_mix_verifies_and_preserves_openings() {
        let (m, shares, rows) = mixed_rows(13, 6);
        let ctx = Bytes32::digest("ctx", &[]);
        let (out, proof) = mix(&m.group, m.pk(), &rows, 20, &ctx, &mut seeded(1)).unwrap();
        let inp = public_rows(&rows);
        let outp = public_rows(&out);
        assert_eq!(verify_mix(&m.group, &inp, &outp, &proof, &ctx, 20), Ok(()));
        assert!(verify_mix(&m.group, &inp, &outp, &proof, &Bytes32::ZERO, 20).is_err(), "proof is bound to its context");
        // Threshold-decrypt and open both sides; the multisets agree.
        let sections = m.sections();
        let open_side = |rows: &[Vec<Cell>]| {
            let cts: Vec<Vec<Ciphertext>> = rows.iter().map(|r| r.iter().map(|c| c.ciphertext).collect()).collect();
            let ds = partial_decrypt_all(&m.group, &shares[1..], &cts);
            let s = combine_all(&m.group, &m.trustees, &cts, &ds).unwrap();
            let mut v = open_all(&m.group, &sections, &public_rows(rows), &s);
            v.sort();
            v
        };
        let before = open_side(&rows);
        assert!(before.iter().flatten().all(|x| x.is_some()));
        assert_eq!(before, open_side(&out));
    }

    #[test]
    fn tampered_output_and_truncated_proof_rejected() {
        let (m, _, rows) = mixed_rows(14, 4);
        let ctx = Bytes32::digest("ctx", &[]);
        let (out, proof) = mix(&m.group, m.pk(), &rows, 20, &ctx, &mut seeded(2)).unwrap();
        let inp = public_rows(&rows);
        let mut outp = public_rows(&out);
        outp[1][2] = outp[1][2] * m.group.g2;
        assert!(verify_mix(&m.group, &inp, &outp, &proof, &ctx, 20).is_err());
        let outp = public_rows(&out);
        let mut short = proof.clone();
        short.rounds.pop();
        assert_eq!(
            verify_mix(&m.group, &inp, &outp, &short, &ctx, 20),
            Err(MixError::RoundCount { expected: 20, found: 19 })
        );
        let mut bad = proof;
        bad.rounds[3].link.perm[0] = bad.rounds[3].link.perm[1];
        assert_eq!(verify_mix(&m.group, &inp, &outp, &bad, &ctx, 20), Err(MixError::BadPermutation(3)));
        assert_eq!(mix(&m.group, m.pk(), &rows[..1], 4, &ctx, &mut seeded(3)).unwrap_err(), MixError::TooFewRows);
    }

    #[test]
    fn invalid_total_is_flagged_not_decoded() {
        let (m, shares) = manifest();
        let sections = m.sections();
        // digit 2 in the board section: candidate 0 twice
        let mut rng = seeded(15);
        let b = generate_encrypted_ballot(&m, 0, &mut RngTrng(&mut rng)).unwrap();
        let c0 = b.section("board").unwrap().candidates[0];
        let doubled = c0.add(&c0);
        let cts = vec![vec![doubled.ciphertext]];
        let ds = partial_decrypt_all(&m.group, &shares[..2], &cts);
        let s = combine_all(&m.group, &m.trustees, &cts, &ds).unwrap();
        let opened = open_all(&m.group, &sections[1..2], &[vec![doubled.commitment]], &s);
        assert_eq!(opened, vec![vec![None]]);
    }

    #[test]
    fn plurality_counts() {
        let c = Contest::plurality("x", &["a", "b"], 1);
        let s = Section { id: "x".into(), contest: 0, rank: None, candidates: 2, k: 1 };
        let r = run_method(&c, &[s], &[vec![Some(1)], vec![Some(1)], vec![Some(2)], vec![None]]);
        assert_eq!(r.counts, [2, 1]);
        assert_eq!(r.invalid, 1);
        assert_eq!(r.ballots, 4);
    }

    /// Independent reading of the elimination rules, written over candidate sets.
    fn irv_oracle(c: usize, ballots: &[Vec<usize>]) -> Option<usize> {
        let mut alive: BTreeSet<usize> = (0..c).collect();
        while !alive.is_empty() {
            let tops: Vec<usize> = ballots.iter().filter_map(|b| b.iter().copied().find(|j| alive.contains(j))).collect();
            if tops.is_empty() {
                return None;
            }
            let tally = |j: &usize| tops.iter().filter(|t| *t == j).count();
            for j in &alive {
                if 2 * tally(j) > tops.len() {
                    return Some(*j);
                }
            }
            if alive.len() == 1 {
                return alive.first().copied();
            }
            let fewest = alive.iter().map(tally).min().unwrap();
            let out = *alive.iter().find(|j| tally(j) == fewest).unwrap();
            alive.remove(&out);
        }
        None
    }

    #[test]
    fn irv_reference_election() {
        let (a, b, c) = (0, 1, 2);
        let ballots = vec![vec![a, b, c], vec![a, b, c], vec![c, b, a], vec![c, b, a], vec![b, c, a]];
        assert_eq!(irv_oracle(3, &ballots), Some(c));
        let (rounds, winner) = irv(3, &ballots);
        assert_eq!(winner, Some(c));
        assert_eq!(rounds[0].counts, [2, 1, 2]);
        assert_eq!(rounds[0].eliminated, Some(b));
        assert_eq!(rounds[1].counts, [2, 0, 3]);
        assert_eq!(irv(3, &[]), (vec![IrvRound { counts: vec![0; 3], eliminated: None }], None));
    }

    #[test]
    fn ranking_rejects_repeats() {
        assert_eq!(ranking(&[vec![1], vec![], vec![0]]), Some(vec![1, 0]));
        assert_eq!(ranking(&[vec![1], vec![1]]), None);
    }

    proptest! {
        #[test]
        fn irv_agrees_with_oracle(ballots in proptest::collection::vec(
            Just(vec![0usize, 1, 2, 3]).prop_shuffle().prop_flat_map(|v| (0..=4usize).prop_map(move |n| v[..n].to_vec())),
            0..25,
        )) {
            prop_assert_eq!(irv(4, &ballots).1, irv_oracle(4, &ballots));
        }

        #[test]
        fn decode_inverts_encoding(c in 1usize..8, k in 1usize..4, mask in 0u32..256) {
            let set: Vec<usize> = (0..c).filter(|j| mask >> j & 1 == 1).take(k).collect();
            let m: u64 = set.iter().map(|&j| (k as u64 + 1).pow(j as u32)).sum();
            prop_assert_eq!(decode(m, c, k), Some(set));
        }
    }
}
