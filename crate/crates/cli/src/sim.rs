//! Whole-election driver and Monte Carlo adversary simulator.
//!
//! Every trial draws all of its randomness, including the ballots' true
//! randomness, from one seeded ChaCha20 generator. That is fine for measuring
//! detection rates and unsafe for a real election.

use std::collections::BTreeMap;

use anyhow::{bail, ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vbm_core::algebra::ScalarField;
use vbm_core::authority::Authority;
use vbm_core::ballot::{BallotForm, EncryptedBallot, PrintedBallot, RngTrng};
use vbm_core::board::{BoardIndex, BoardLog};
use vbm_core::cce::commit_encrypt;
use vbm_core::disputes::{file_challenge, sign, BallotKeypair, PartialEvidence, Verdict};
use vbm_core::hash::tagged_hash;
use vbm_core::manifest::{CodeFormat, Contest, ElectionConfig, ElectionManifest, ElectionOptions, Method, TrusteeConfig};
use vbm_core::remotevote::select_spoil_column;
use vbm_core::safevote::{challenge, ChallengeReport, ChallengeVerdict};
use vbm_core::tally::{selections, Marks, Selections};
use vbm_core::verify::{verify_election, voter_check, VerificationReport, VerifyOptions, VoterFinding};
use vbm_core::{Bytes32, Cell, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    RemoteVote,
    SafeVote,
    Hybrid,
}

impl Scheme {
    pub fn form(self) -> BallotForm {
        match self {
            Scheme::RemoteVote => BallotForm::RemoteVotePair,
            Scheme::SafeVote => BallotForm::SafeVote,
            Scheme::Hybrid => BallotForm::Hybrid,
        }
    }

    pub fn paired(self) -> bool {
        self != Scheme::SafeVote
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnPolicy {
    #[default]
    Random,
    A,
    B,
}

/// Misbehaviour injected into a trial. Victims are the first voters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum Adversary {
    #[default]
    None,
    /// Swap two candidates' weights in one column of `count` victims' ballots.
    ForgeCell {
        #[serde(default)]
        column: ColumnPolicy,
        #[serde(default = "one")]
        count: usize,
    },
    /// Post a receipt naming a different candidate than the victim marked.
    WrongReceipt,
    /// Cast the victim's spoiled column.
    WrongReceiptColumn,
    /// Receive but never record `count` ballots.
    DropBallots {
        #[serde(default = "one")]
        count: usize,
    },
    /// Replace one mixed output cell after the proof is made.
    MixTamper,
    /// Claim an intact ballot was scratched and cast an altered duplicate.
    ScratchDuplicateAlter,
    /// Omit the victim pair's spoil reveal.
    SkippedReveal,
    /// Post a receipt for a scratched ballot as well as its notice.
    ReceiptAndNotice,
    /// Cast one spare ballot nobody returned.
    ExtraReceipt,
    /// Publish a ballot after the beacon or the first receipt.
    LatePublication,
    /// Reveal the column the beacon did not select.
    WrongSpoilColumn,
    /// Discard `count` returned envelopes before they are logged.
    Intercept {
        #[serde(default = "one")]
        count: usize,
    },
}

fn one() -> usize {
    1
}

impl Adversary {
    fn victims(&self) -> usize {
        match self {
            Adversary::None | Adversary::MixTamper | Adversary::ExtraReceipt | Adversary::LatePublication => 0,
            Adversary::ForgeCell { count, .. } | Adversary::DropBallots { count } | Adversary::Intercept { count } => *count,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub scheme: Scheme,
    pub voters: usize,
    pub contests: Vec<Contest>,
    pub adversary: Adversary,
    /// Chance that an ordinary voter checks the board against their ballot.
    pub verifying_fraction: f64,
    /// SAFE Vote: voters who scratch and challenge a ballot before voting on a
    /// replacement. Hybrid: voters who scratch and challenge the spoiled column.
    pub challengers: usize,
    /// Voters who return a ballot with its cast column scratched.
    pub scratched_returns: usize,
    /// Of those, how many grace-spoil the duplicate and vote again.
    pub grace_revotes: usize,
    /// Whether eligibility counts toward detection.
    pub voter_list_check: bool,
    pub mix_rounds: u32,
    pub ballot_keys: bool,
    pub collection_accountability: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            scheme: Scheme::RemoteVote,
            voters: 20,
            contests: standard_contests(),
            adversary: Adversary::None,
            verifying_fraction: 1.0,
            challengers: 0,
            scratched_returns: 0,
            grace_revotes: 0,
            voter_list_check: true,
            mix_rounds: 20,
            ballot_keys: true,
            collection_accountability: true,
            trials: 1,
            seed: 0,
        }
    }
}

/// Plurality with four candidates, approval of up to two of three, and a ranked contest.
pub fn standard_contests() -> Vec<Contest> {
    vec![
        Contest::plurality("mayor", &["ann", "bob", "cat", "dee"], 1),
        Contest::plurality("parks", &["elm", "fir", "gum"], 2),
        Contest::irv("council", &["hal", "ivy", "jon"], 3),
    ]
}

impl SimulationConfig {
    pub fn election_config(&self) -> ElectionConfig {
        ElectionConfig {
            election_id: "simulation".into(),
            contests: self.contests.clone(),
            trustees: TrusteeConfig::default(),
            codes: CodeFormat::default(),
            options: ElectionOptions {
                ballot_keys: self.ballot_keys,
                collection_accountability: self.collection_accountability,
                mix_rounds: self.mix_rounds,
                ..ElectionOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!((0.0..=1.0).contains(&self.verifying_fraction), "verifying_fraction must lie in [0, 1]");
        ensure!(self.grace_revotes <= self.scratched_returns, "grace_revotes exceeds scratched_returns");
        let special = self.adversary.victims() + self.challengers + self.scratched_returns;
        ensure!(self.voters >= 2 && special <= self.voters, "too few voters for the configured roles");
        let pair_only = matches!(
            self.adversary,
            Adversary::WrongReceiptColumn | Adversary::SkippedReveal | Adversary::WrongSpoilColumn
        );
        if pair_only && !self.scheme.paired() {
            bail!("{:?} needs a two-column scheme", self.adversary);
        }
        self.election_config().validate()?;
        Ok(())
    }
}

/// Everything a single simulated election leaves behind.
#[derive(Debug, Clone)]
pub struct Election {
    pub authority: Authority,
    pub board: BoardLog,
    /// Each voter's printed ballot as returned, with their true marks.
    pub ballots: Vec<(PrintedBallot, Marks)>,
    /// Marks of the ballots that should be counted, in voter order.
    pub counted_marks: Vec<Marks>,
    pub challenges: Vec<ChallengeReport>,
    pub verifying: Vec<bool>,
    pub report: VerificationReport,
    pub voter_findings: Vec<(usize, Vec<VoterFinding>)>,
}

impl Election {
    pub fn manifest(&self) -> &ElectionManifest {
        &self.authority.manifest
    }

    /// Whether each contest's decoded choice sets equal the counted marks.
    pub fn tally_matches_ground_truth(&self) -> bool {
        let Ok(ix) = BoardIndex::build(&self.board) else { return false };
        let Some((_, t)) = ix.tallies.first() else { return false };
        let m = self.manifest();
        m.contests.iter().enumerate().all(|(ci, c)| {
            let Some(result) = t.results.iter().find(|r| r.contest == c.id) else { return false };
            let mut expected: Vec<Vec<Vec<usize>>> = self
                .counted_marks
                .iter()
                .map(|mk| {
                    let sel = selections(m, mk).expect("simulated marks are valid");
                    m.contest_sections(ci).iter().map(|s| sel[&s.id].clone()).collect()
                })
                .collect();
            expected.sort();
            result.invalid == 0 && result.choices == expected
        })
    }

    /// Ballot ids with both a receipt and a scratch notice.
    pub fn receipt_notice_conflicts(&self) -> usize {
        let Ok(ix) = BoardIndex::build(&self.board) else { return 0 };
        ix.notices.iter().filter(|(_, n)| !ix.receipts_for(&n.ballot_id).is_empty()).count()
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.report.disputes.iter().filter_map(|d| d.verdict).collect()
    }

    pub fn detected(&self, voter_list_check: bool) -> bool {
        let verifier = self.report.failed().iter().any(|c| voter_list_check || *c != "eligibility");
        let voters = self.voter_findings.iter().any(|(_, f)| !f.is_empty());
        let challenges = self.challenges.iter().any(|c| c.verdict != ChallengeVerdict::Consistent);
        verifier || voters || challenges || self.verdicts().contains(&Verdict::VoterProven)
    }
}

fn random_marks(manifest: &ElectionManifest, rng: &mut ChaCha20Rng) -> Marks {
    let mut marks = Marks::default();
    for c in &manifest.contests {
        let mut order: Vec<usize> = (0..c.candidates.len()).collect();
        order.shuffle(rng);
        let n = match c.method {
            Method::Plurality { selections } => rng.gen_range(0..=selections),
            Method::Irv { ranks } => rng.gen_range(1..=ranks),
        };
        order.truncate(n);
        marks = marks.with(&c.id, &order);
    }
    marks
}

/// Moves the first section's selection to a candidate the voter did not choose.
fn alter(manifest: &ElectionManifest, sel: &Selections) -> Selections {
    let mut out = sel.clone();
    let sec = &manifest.sections()[0];
    let chosen = out.get_mut(&sec.id).expect("every section is present");
    let free = (0..sec.candidates).find(|j| !chosen.contains(j)).expect("a section has an unchosen candidate");
    if chosen.is_empty() {
        chosen.push(free);
    } else {
        chosen[0] = free;
    }
    chosen.sort_unstable();
    out
}

/// Swaps the weights of candidates 0 and 1 in one section, keeping each cell's randomness.
pub fn forge(manifest: &ElectionManifest, ballot: &mut EncryptedBallot) {
    let sec = manifest.sections().into_iter().find(|s| s.candidates >= 2).expect("a section with two candidates");
    let cells = ballot.sections.iter_mut().find(|c| c.section == sec.id).expect("ballot has the section");
    for (j, weight) in [(0, sec.weight(1)), (1, sec.weight(0))] {
        let o = cells.candidates[j].opening.expect("authority cells carry openings");
        cells.candidates[j] = commit_encrypt(&manifest.group, manifest.pk(), weight, o.s, o.r);
    }
    ballot.refresh_codes(manifest);
}

fn fresh_ballot(auth: &mut Authority, rng: &mut ChaCha20Rng) -> Result<EncryptedBallot> {
    Ok(auth.generate(&mut RngTrng(rng))?)
}

/// Publishes a pair with one forged column, retrying until the columns' codes do not collide.
fn forged_pair(auth: &mut Authority, board: &mut BoardLog, form: BallotForm, policy: ColumnPolicy, rng: &mut ChaCha20Rng) -> Result<Bytes32> {
    let column = match policy {
        ColumnPolicy::A => 0,
        ColumnPolicy::B => 1,
        ColumnPolicy::Random => rng.gen_range(0..2),
    };
    loop {
        let mut cols = [fresh_ballot(auth, rng)?, fresh_ballot(auth, rng)?];
        forge(&auth.manifest, &mut cols[column]);
        if cols[column].has_shortcode_collision() || vbm_core::remotevote::collides(&cols[0], &cols[1]) {
            continue;
        }
        let [a, b] = cols;
        let (a, b) = (auth.publish(board, a, None), auth.publish(board, b, None));
        return Ok(auth.pair_published(board, a, b, form, &mut RngTrng(rng))?);
    }
}

fn forged_single(auth: &mut Authority, board: &mut BoardLog, rng: &mut ChaCha20Rng) -> Result<Bytes32> {
    loop {
        let mut b = fresh_ballot(auth, rng)?;
        forge(&auth.manifest, &mut b);
        if !b.has_shortcode_collision() {
            return Ok(auth.publish_single(board, b, &mut RngTrng(rng))?);
        }
    }
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    let h = tagged_hash("sim/trial", &[&seed.to_be_bytes(), &(trial as u64).to_be_bytes()]);
    u64::from_be_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Files a signed challenge for the first receipt section that disagrees with the voter's marks.
fn dispute(auth: &mut Authority, board: &mut BoardLog, printed: &PrintedBallot, marks: &Marks, rng: &mut ChaCha20Rng) -> Result<()> {
    let m = auth.manifest.clone();
    let ix = BoardIndex::build(board)?;
    let Some(receipt) = ix.receipts_for(&printed.ballot_id).first().map(|r| (*r).clone()) else { return Ok(()) };
    let Some(col) = printed.column_ids.iter().position(|c| *c == receipt.column) else { return Ok(()) };
    let sel = selections(&m, marks)?;
    for sec in m.sections() {
        let posted = receipt.codes.get(&sec.id).cloned().unwrap_or_default();
        for &j in &sel[&sec.id] {
            let row = &printed.section(&sec.id).expect("printed from the manifest").rows[j];
            if posted.contains(&row.codes[col]) || row.partials.is_empty() {
                continue;
            }
            let ev = PartialEvidence {
                ballot_id: printed.ballot_id,
                section: sec.id.clone(),
                candidate: j,
                shortcode: row.codes[col].clone(),
                partial: row.partials[col].clone(),
            };
            let sig = printed.signing_key.map(|k| sign(&m.group, &BallotKeypair::from_secret(&m.group, k), &ev.message()));
            let ch = file_challenge(&m, &ix, ev, sig)?;
            let seq = board.append(&ch).seq;
            auth.respond(board, seq, rng)?;
            return Ok(());
        }
    }
    Ok(())
}

/// Runs one election from setup to verification under `config.adversary`.
pub fn run_election(config: &SimulationConfig, seed: u64) -> Result<Election> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (manifest, shares) = config.election_config().setup(&mut rng)?;
    let mut auth = Authority::new(manifest, shares);
    let mut board = BoardLog::new();
    let form = config.scheme.form();
    let adv = &config.adversary;
    let victims = adv.victims();

    // ballots: one per voter, a replacement per challenger or scratcher, and spares
    let stock = config.voters + config.challengers + 2 * config.scratched_returns + 4;
    let mut forged = Vec::new();
    if let Adversary::ForgeCell { column, count } = adv {
        for _ in 0..*count {
            let id = match config.scheme {
                Scheme::SafeVote => forged_single(&mut auth, &mut board, &mut rng)?,
                _ => forged_pair(&mut auth, &mut board, form, *column, &mut rng)?,
            };
            auth.issued.insert(id);
            forged.push(id);
        }
    }
    match config.scheme {
        Scheme::SafeVote => {
            for _ in 0..stock {
                auth.create_single(&mut board, &mut RngTrng(&mut rng))?;
            }
        }
        _ => {
            auth.create_pairs(&mut board, &mut RngTrng(&mut rng), stock, form)?;
        }
    }

    let mut issued: Vec<Bytes32> = forged.clone();
    while issued.len() < config.voters {
        issued.push(auth.issue(form).context("ballot stock exhausted")?);
    }

    let mut beacon = Vec::new();
    if config.scheme.paired() {
        beacon = Bytes32::random(&mut rng).0.to_vec();
        auth.post_beacon(&mut board, &beacon)?;
        let victim = issued[0];
        match adv {
            Adversary::SkippedReveal => {
                let rule = select_spoil_column(&beacon, &victim);
                auth.physical.get_mut(&victim).expect("issued").spoiled = Some(rule);
            }
            Adversary::WrongSpoilColumn => {
                auth.spoil(&mut board, &victim, select_spoil_column(&beacon, &victim).other())?;
            }
            _ => {}
        }
        auth.spoil_all(&mut board)?;
        if *adv == Adversary::LatePublication {
            let b = fresh_ballot(&mut auth, &mut rng)?;
            auth.publish(&mut board, b, None);
        }
    }

    let mut ballots = Vec::new();
    let mut counted_marks = Vec::new();
    let mut challenges = Vec::new();
    let mut verifying = Vec::new();
    let mut arrived = 0usize;
    let mut grace_left = config.grace_revotes;
    for (i, &issued_id) in issued.iter().enumerate() {
        let mut id = issued_id;
        let is_victim = i < victims;
        let mut marks = random_marks(&auth.manifest, &mut rng);
        // a misrepresented victim needs a selection to misrepresent
        let first = auth.manifest.contests[0].id.clone();
        while is_victim && *adv == Adversary::WrongReceipt && marks.0[&first].is_empty() {
            marks = random_marks(&auth.manifest, &mut rng);
        }
        let role = i.checked_sub(victims);
        let challenger = role.is_some_and(|r| r < config.challengers);
        let scratcher = role.is_some_and(|r| r >= config.challengers && r < config.challengers + config.scratched_returns);
        verifying.push(is_victim || rng.gen_bool(config.verifying_fraction));

        // pre-vote audits
        let mut printed = auth.print(&id)?;
        let forged_victim = is_victim && matches!(adv, Adversary::ForgeCell { .. });
        if config.scheme == Scheme::SafeVote && (challenger || forged_victim) {
            let seed = printed.scratch_off(0).expect("one panel");
            challenges.push(challenge(&auth.manifest, &printed, 0, &seed)?);
            id = auth.issue_replacement(&mut board, &id, &mut RngTrng(&mut rng))?;
            printed = auth.print(&id)?;
        } else if config.scheme == Scheme::Hybrid && challenger {
            let col = select_spoil_column(&beacon, &id).index();
            let seed = printed.scratch_off(col).expect("two panels");
            challenges.push(challenge(&auth.manifest, &printed, col, &seed)?);
        }
        if scratcher && config.scheme != Scheme::RemoteVote {
            let col = auth.cast_column(&id)?;
            printed.scratch_off(col);
        }

        if is_victim && matches!(adv, Adversary::Intercept { .. }) {
            ballots.push((printed, marks));
            continue;
        }
        arrived += 1;
        let sel = selections(&auth.manifest, &marks)?;
        let col = auth.cast_column(&id)?;
        match adv {
            Adversary::WrongReceipt if is_victim => {
                auth.record_cast(&mut board, &id, col, alter(&auth.manifest, &sel))?;
            }
            Adversary::WrongReceiptColumn if is_victim => {
                let spoiled = auth.physical[&id].spoiled.expect("spoiled after the beacon").index();
                auth.record_cast(&mut board, &id, spoiled, sel)?;
                counted_marks.push(marks.clone());
            }
            Adversary::DropBallots { .. } if is_victim => {}
            Adversary::ScratchDuplicateAlter if is_victim => {
                auth.post_scratch_notice(&mut board, &id);
                let dup = auth.issue(form).context("no spare for the duplicate")?;
                let dcol = auth.cast_column(&dup)?;
                auth.record_cast(&mut board, &dup, dcol, alter(&auth.manifest, &sel))?;
                auth.duplicates.insert(id, dup);
            }
            Adversary::ReceiptAndNotice if is_victim => {
                auth.post_scratch_notice(&mut board, &id);
                auth.record_cast(&mut board, &id, col, sel)?;
                counted_marks.push(marks.clone());
            }
            _ => {
                auth.receive(&mut board, &printed, &marks)?;
                if scratcher && config.scheme != Scheme::RemoteVote && grace_left > 0 {
                    grace_left -= 1;
                    auth.grace_spoil(&mut board, &id)?;
                    let again = auth.issue(form).context("no spare for a revote")?;
                    let fresh = auth.print(&again)?;
                    let revote = random_marks(&auth.manifest, &mut rng);
                    auth.receive(&mut board, &fresh, &revote)?;
                    counted_marks.push(revote);
                } else {
                    counted_marks.push(marks.clone());
                }
            }
        }
        if *adv == Adversary::LatePublication && !config.scheme.paired() && i == 0 {
            let b = fresh_ballot(&mut auth, &mut rng)?;
            auth.publish(&mut board, b, None);
        }
        ballots.push((printed, marks));
    }

    if *adv == Adversary::ExtraReceipt {
        let id = auth.issue(form).context("no spare to stuff")?;
        let marks = random_marks(&auth.manifest, &mut rng);
        let col = auth.cast_column(&id)?;
        let sel = selections(&auth.manifest, &marks)?;
        auth.record_cast(&mut board, &id, col, sel)?;
        counted_marks.push(marks);
    }

    let names: Vec<String> = (0..arrived).map(|i| format!("voter-{i:04}")).collect();
    auth.post_voter_list(&mut board, &names);

    if *adv == Adversary::MixTamper {
        let mut trng = ChaCha20Rng::seed_from_u64(rng.gen());
        let mut done = false;
        let params = auth.manifest.group.clone();
        let pk = *auth.manifest.pk();
        let valid: BTreeMap<String, Vec<u64>> =
            auth.manifest.contests.iter().enumerate().map(|(ci, c)| (c.id.clone(), auth.manifest.contest_sections(ci)[0].valid_totals())).collect();
        let mut tamper = |contest: &str, rows: &mut Vec<Vec<Cell>>| {
            if done {
                return;
            }
            done = true;
            let totals = &valid[contest];
            let m = totals[trng.gen_range(0..totals.len())];
            rows[0][0] = commit_encrypt(&params, &pk, m, Scalar::random(&mut trng), Scalar::random(&mut trng));
        };
        auth.mix_contests(&mut board, &mut rng, Some(&mut tamper))?;
        let opened = auth.decrypt_and_open(&mut board)?;
        auth.publish_results(&mut board, &opened);
    } else {
        auth.tally(&mut board, &mut rng)?;
    }

    // verifying voters dispute any misrepresented selection
    if config.collection_accountability {
        for (i, (printed, marks)) in ballots.iter().enumerate() {
            if verifying[i] {
                dispute(&mut auth, &mut board, printed, marks, &mut rng)?;
            }
        }
    }

    let report = verify_election(&auth.manifest, &board, &VerifyOptions { beacon: config.scheme.paired().then(|| beacon.clone()) });
    let voter_findings = ballots
        .iter()
        .enumerate()
        .filter(|(i, _)| verifying[*i])
        .map(|(i, (p, mk))| (i, voter_check(&auth.manifest, &board, p, mk)))
        .collect();
    Ok(Election { authority: auth, board, ballots, counted_marks, challenges, verifying, report, voter_findings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub detected: bool,
    pub failed_checks: Vec<String>,
    pub voter_findings: usize,
    pub discrepant_challenges: usize,
    pub verdicts: Vec<Verdict>,
    pub tally_matches: bool,
    pub receipt_notice_conflicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub trials: Vec<TrialOutcome>,
    pub detection_rate: f64,
    /// 95% Wilson score interval for the detection rate.
    pub confidence_interval: [f64; 2],
    pub verdicts: BTreeMap<String, usize>,
}

pub fn wilson_interval(successes: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

pub fn run_trial(config: &SimulationConfig, trial: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(config.seed, trial);
    let e = run_election(config, seed)?;
    Ok(TrialOutcome {
        trial,
        seed,
        detected: e.detected(config.voter_list_check),
        failed_checks: e.report.failed().into_iter().map(String::from).collect(),
        voter_findings: e.voter_findings.iter().filter(|(_, f)| !f.is_empty()).count(),
        discrepant_challenges: e.challenges.iter().filter(|c| c.verdict != ChallengeVerdict::Consistent).count(),
        verdicts: e.verdicts(),
        tally_matches: e.tally_matches_ground_truth(),
        receipt_notice_conflicts: e.receipt_notice_conflicts(),
    })
}

/// Runs `config.trials` independent elections in parallel.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let trials: Vec<TrialOutcome> = (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect::<Result<_>>()?;
    let hits = trials.iter().filter(|t| t.detected).count();
    let mut verdicts = BTreeMap::new();
    for v in trials.iter().flat_map(|t| &t.verdicts) {
        *verdicts.entry(format!("{v:?}")).or_insert(0) += 1;
    }
    Ok(SimulationResult {
        detection_rate: hits as f64 / trials.len() as f64,
        confidence_interval: wilson_interval(hits, trials.len()),
        trials,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme, adversary: Adversary) -> SimulationConfig {
        SimulationConfig { scheme, voters: 5, adversary, mix_rounds: 8, ..SimulationConfig::default() }
    }

    #[test]
    fn honest_runs_match_ground_truth() {
        for scheme in [Scheme::RemoteVote, Scheme::SafeVote, Scheme::Hybrid] {
            let cfg = SimulationConfig { challengers: 1, scratched_returns: 2, grace_revotes: 1, ..small(scheme, Adversary::None) };
            let e = run_election(&cfg, 3).unwrap();
            assert!(e.report.passed(), "{scheme:?}: {:?}", e.report.failed());
            assert!(e.tally_matches_ground_truth());
            assert!(!e.detected(true));
        }
    }

    #[test]
    fn wilson_bounds() {
        let [lo, hi] = wilson_interval(500, 1000);
        assert!(lo < 0.5 && hi > 0.5 && hi - lo < 0.07);
        assert_eq!(wilson_interval(0, 10)[0], 0.0);
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: SimulationConfig =
            serde_json::from_str(r#"{"scheme":"safevote","adversary":{"strategy":"forge_cell"},"trials":3}"#).unwrap();
        assert_eq!(cfg.adversary, Adversary::ForgeCell { column: ColumnPolicy::Random, count: 1 });
        assert_eq!(cfg.voters, 20);
    }
}
