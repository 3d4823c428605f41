use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use vbm_core::authority::Authority;
use vbm_core::ballot::{BallotForm, PrintedBallot, RngTrng};
use vbm_core::board::{BoardIndex, BoardLog, ResponseRecord};
use vbm_core::disputes::{file_challenge, sign, BallotKeypair, PartialEvidence, Verdict};
use vbm_core::manifest::{CodeFormat, Contest, ElectionConfig, ElectionOptions, TrusteeConfig};
use vbm_core::remotevote::select_spoil_column;
use vbm_core::safevote::{challenge, ChallengeVerdict, Disposition};
use vbm_core::tally::Marks;
use vbm_core::verify::{verify_election, voter_check, VerifyOptions, VoterFinding};
use vbm_core::Bytes32;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn authority(seed: u64) -> Authority {
    let config = ElectionConfig {
        election_id: "it".into(),
        contests: vec![
            Contest::plurality("mayor", &["ann", "bob", "cat"], 1),
            Contest::plurality("board", &["dan", "eve", "fay", "gil"], 2),
            Contest::irv("council", &["hal", "ivy", "jon"], 3),
        ],
        trustees: TrusteeConfig::default(),
        codes: CodeFormat::default(),
        options: ElectionOptions { mix_rounds: 16, ..ElectionOptions::default() },
    };
    let (m, shares) = config.setup(&mut rng(seed)).unwrap();
    Authority::new(m, shares)
}

fn marks(i: usize) -> Marks {
    Marks::default()
        .with("mayor", &[i % 3])
        .with("board", &[i % 4, (i + 1) % 4])
        .with("council", &[(i + 1) % 3, i % 3])
}

struct Run {
    auth: Authority,
    board: BoardLog,
    ballots: Vec<(PrintedBallot, Marks)>,
    rng: ChaCha20Rng,
}

/// Creates ballots and casts `voters` of them; does not tally.
fn cast(form: BallotForm, voters: usize, seed: u64) -> Run {
    let mut auth = authority(seed);
    let mut board = BoardLog::new();
    let mut r = rng(seed + 1);
    let spares = voters + 4;
    match form {
        BallotForm::SafeVote => {
            for _ in 0..spares {
                auth.create_single(&mut board, &mut RngTrng(&mut r)).unwrap();
            }
        }
        _ => {
            auth.create_pairs(&mut board, &mut RngTrng(&mut r), spares, form).unwrap();
            auth.post_beacon(&mut board, b"beacon-it").unwrap();
            auth.spoil_all(&mut board).unwrap();
        }
    }
    let mut ballots = Vec::new();
    for i in 0..voters {
        let id = auth.issue(form).unwrap();
        let printed = auth.print(&id).unwrap();
        let mk = marks(i);
        auth.receive(&mut board, &printed, &mk).unwrap();
        ballots.push((printed, mk));
    }
    let names: Vec<String> = (0..voters).map(|i| format!("voter{i}")).collect();
    auth.post_voter_list(&mut board, &names);
    Run { auth, board, ballots, rng: r }
}

fn finish(run: &mut Run) {
    run.auth.tally(&mut run.board, &mut run.rng).unwrap();
}

fn expected_counts(voters: usize) -> Vec<u64> {
    let mut c = vec![0; 3];
    for i in 0..voters {
        c[i % 3] += 1;
    }
    c
}

#[test]
fn honest_elections_verify() {
    for form in [BallotForm::RemoteVotePair, BallotForm::SafeVote, BallotForm::Hybrid] {
        let mut run = cast(form, 7, 10);
        finish(&mut run);
        let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions { beacon: None });
        assert!(report.passed(), "{form:?}: {:?}", report.failed());
        let ix = BoardIndex::build(&run.board).unwrap();
        assert_eq!(ix.tallies[0].1.results[0].counts, expected_counts(7));
        for (printed, mk) in &run.ballots {
            assert!(voter_check(&run.auth.manifest, &run.board, printed, mk).is_empty());
        }
    }
}

#[test]
fn board_survives_jsonl_roundtrip() {
    let mut run = cast(BallotForm::Hybrid, 4, 20);
    finish(&mut run);
    let back = BoardLog::from_jsonl(&run.board.to_jsonl()).unwrap();
    assert_eq!(back.posts(), run.board.posts());
    assert!(verify_election(&run.auth.manifest, &back, &VerifyOptions::default()).passed());
}

#[test]
fn independent_beacon_must_match() {
    let mut run = cast(BallotForm::RemoteVotePair, 3, 30);
    finish(&mut run);
    let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions { beacon: Some(b"other".to_vec()) });
    assert_eq!(report.failed(), ["spoil_compliance"]);
}

#[test]
fn tampered_board_breaks_the_chain() {
    let mut run = cast(BallotForm::SafeVote, 3, 40);
    finish(&mut run);
    let mut posts = run.board.clone().into_posts();
    posts[2].body["longcode"] = serde_json::json!(Bytes32([9; 32]));
    let report = verify_election(&run.auth.manifest, &BoardLog::from_posts(posts), &VerifyOptions::default());
    assert!(report.failed().contains(&"chain"));
}

#[test]
fn scratched_safevote_is_duplicated_and_grace_spoiled() {
    let mut run = cast(BallotForm::SafeVote, 3, 50);
    let id = run.auth.issue(BallotForm::SafeVote).unwrap();
    let mut printed = run.auth.print(&id).unwrap();
    let seed = printed.scratch_off(0).unwrap();
    assert_eq!(challenge(&run.auth.manifest, &printed, 0, &seed).unwrap().verdict, ChallengeVerdict::Consistent);
    let d = run.auth.receive(&mut run.board, &printed, &marks(0)).unwrap();
    assert!(matches!(d, Disposition::Duplicated { .. }));
    assert!(voter_check(&run.auth.manifest, &run.board, &printed, &marks(0)).is_empty());

    // the voter withdraws it and casts a fresh ballot instead
    run.auth.grace_spoil(&mut run.board, &id).unwrap();
    let id2 = run.auth.issue(BallotForm::SafeVote).unwrap();
    let p2 = run.auth.print(&id2).unwrap();
    run.auth.receive(&mut run.board, &p2, &marks(1)).unwrap();
    let names: Vec<String> = (0..4).map(|i| format!("v{i}")).collect();
    run.auth.post_voter_list(&mut run.board, &names);
    finish(&mut run);
    let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions::default());
    assert!(report.passed(), "{:?}", report.failed());
    let ix = BoardIndex::build(&run.board).unwrap();
    assert_eq!(ix.tallies[0].1.results[0].counts, [1, 2, 1]);
}

#[test]
fn hybrid_scratch_of_the_spoiled_column_still_casts() {
    let mut run = cast(BallotForm::Hybrid, 2, 60);
    let id = run.auth.issue(BallotForm::Hybrid).unwrap();
    let mut printed = run.auth.print(&id).unwrap();
    let spoiled = select_spoil_column(b"beacon-it", &id);
    printed.scratch_off(spoiled.index());
    assert!(matches!(run.auth.receive(&mut run.board, &printed, &marks(0)).unwrap(), Disposition::Cast { .. }));

    let id2 = run.auth.issue(BallotForm::Hybrid).unwrap();
    let mut p2 = run.auth.print(&id2).unwrap();
    p2.scratch_off(select_spoil_column(b"beacon-it", &id2).other().index());
    assert!(matches!(run.auth.receive(&mut run.board, &p2, &marks(1)).unwrap(), Disposition::Duplicated { .. }));
    assert!(voter_check(&run.auth.manifest, &run.board, &p2, &marks(1)).is_empty());
}

fn evidence_for(run: &Run, voter: usize, genuine: bool) -> (PartialEvidence, PrintedBallot) {
    let (printed, mk) = &run.ballots[voter];
    let ix = BoardIndex::build(&run.board).unwrap();
    let receipt = ix.receipts_for(&printed.ballot_id)[0].clone();
    let col = printed.column_ids.iter().position(|c| *c == receipt.column).unwrap();
    let j = mk.0["mayor"][0];
    let row = &printed.section("mayor").unwrap().rows[j];
    let partial = if genuine { row.partials[col].clone() } else { "00".repeat(16) };
    let ev = PartialEvidence {
        ballot_id: printed.ballot_id,
        section: "mayor".into(),
        candidate: j,
        shortcode: row.codes[col].clone(),
        partial,
    };
    (ev, printed.clone())
}

#[test]
fn dispute_verdicts() {
    let mut run = cast(BallotForm::RemoteVotePair, 4, 70);
    // the authority records voter 0 as choosing someone else
    let (printed, mk) = run.ballots[0].clone();
    let ix = BoardIndex::build(&run.board).unwrap();
    assert_eq!(ix.receipts_for(&printed.ballot_id).len(), 1);

    // a receipt that omits the voter's mayor choice
    let mut altered = run.auth.clone();
    let mut board = BoardLog::new();
    for p in run.board.posts().iter().filter(|p| p.kind != vbm_core::board::PostKind::CastReceipt) {
        board.append_raw(p.kind, p.body.clone()).unwrap();
    }
    for (i, (p, m)) in run.ballots.iter().enumerate() {
        let col = altered.cast_column(&p.ballot_id).unwrap();
        let mut sel = vbm_core::tally::selections(&altered.manifest, m).unwrap();
        if i == 0 {
            sel.insert("mayor".into(), vec![(mk.0["mayor"][0] + 1) % 3]);
        }
        altered.record_cast(&mut board, &p.ballot_id, col, sel).unwrap();
    }
    run.board = board;
    run.auth = altered;

    let findings = voter_check(&run.auth.manifest, &run.board, &printed, &mk);
    assert_eq!(findings, [VoterFinding::ReceiptMismatch { section: "mayor".into() }]);

    let key = BallotKeypair::from_secret(&run.auth.manifest.group, printed.signing_key.unwrap());
    for (genuine, expect) in [(true, Verdict::VoterProven), (false, Verdict::AuthorityVindicated)] {
        let (ev, _) = evidence_for(&run, 0, genuine);
        let sig = sign(&run.auth.manifest.group, &key, &ev.message());
        let ix = BoardIndex::build(&run.board).unwrap();
        let ch = file_challenge(&run.auth.manifest, &ix, ev.clone(), Some(sig)).unwrap();
        let seq = run.board.append(&ch).seq;
        run.auth.respond(&mut run.board, seq, &mut run.rng).unwrap();
        let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions::default());
        assert_eq!(report.disputes.last().unwrap().verdict, Some(expect));
    }

    // unsigned challenges are refused while ballot keys are on
    let (ev, _) = evidence_for(&run, 0, true);
    let ix = BoardIndex::build(&run.board).unwrap();
    assert!(file_challenge(&run.auth.manifest, &ix, ev.clone(), None).is_err());

    // a response without a proof
    let sig = sign(&run.auth.manifest.group, &key, &ev.message());
    let ch = file_challenge(&run.auth.manifest, &ix, ev, Some(sig)).unwrap();
    let seq = run.board.append(&ch).seq;
    let mut resp: ResponseRecord = run.auth.response_for(&run.board, seq, &mut run.rng).unwrap();
    resp.proof = None;
    run.board.append(&resp);
    let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions::default());
    assert_eq!(report.disputes.last().unwrap().verdict, Some(Verdict::ResponseInvalid));
    assert!(report.failed().contains(&"disputes"));
}

#[test]
fn disclaimers_are_counted_and_refused_after_results() {
    let mut run = cast(BallotForm::SafeVote, 4, 80);
    let id = run.ballots[0].0.ballot_id;
    run.auth.disclaim(&mut run.board, &id, "mayor").unwrap();
    finish(&mut run);
    let report = verify_election(&run.auth.manifest, &run.board, &VerifyOptions::default());
    assert!(report.passed(), "{:?}", report.failed());
    assert_eq!(report.disclaimed, 1);
    assert!(run.auth.disclaim(&mut run.board, &run.ballots[1].0.ballot_id, "mayor").is_err());
}

#[test]
fn verification_is_deterministic() {
    let mut a = cast(BallotForm::Hybrid, 3, 90);
    let mut b = cast(BallotForm::Hybrid, 3, 90);
    finish(&mut a);
    finish(&mut b);
    assert_eq!(a.board.to_jsonl(), b.board.to_jsonl());
    let ra = serde_json::to_string(&verify_election(&a.auth.manifest, &a.board, &VerifyOptions::default())).unwrap();
    let rb = serde_json::to_string(&verify_election(&b.auth.manifest, &b.board, &VerifyOptions::default())).unwrap();
    assert_eq!(ra, rb);
}
