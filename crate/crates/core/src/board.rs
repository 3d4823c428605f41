//! Append-only, hash-chained bulletin board with typed posts.
//!
//! Each post is one JSON line with lexicographically ordered keys. The post
//! hash covers the sequence number, the previous hash, the kind and the
//! canonical serialization of the body.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ballot::PublicSection;
use crate::disputes::{PartialEvidence, Signature, ValidityProof};
use crate::hash::{tagged_hash, Bytes32};
use crate::remotevote::Column;
use crate::tally::{ContestResult, MixProof};
use crate::{Ciphertext, DecryptionShare, Element};

#[derive(Debug, thiserror::Error)]
pub enum BoardError {
    #[error("post body must be a JSON object")]
    NotCanonical,
    #[error("post {seq}: body does not decode as {kind}: {msg}")]
    Body { seq: u64, kind: PostKind, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PostKind {
    BallotPublication,
    PairRecord,
    BeaconRecord,
    SpoilReveal,
    CastReceipt,
    ScratchNotice,
    GraceSpoil,
    Disclaimer,
    VoterListRecord,
    MixRecord,
    DecryptionRecord,
    OpeningRecord,
    TallyRecord,
    ChallengeRecord,
    ResponseRecord,
}

impl PostKind {
    pub const ALL: [PostKind; 15] = [
        PostKind::BallotPublication,
        PostKind::PairRecord,
        PostKind::BeaconRecord,
        PostKind::SpoilReveal,
        PostKind::CastReceipt,
        PostKind::ScratchNotice,
        PostKind::GraceSpoil,
        PostKind::Disclaimer,
        PostKind::VoterListRecord,
        PostKind::MixRecord,
        PostKind::DecryptionRecord,
        PostKind::OpeningRecord,
        PostKind::TallyRecord,
        PostKind::ChallengeRecord,
        PostKind::ResponseRecord,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostKind::BallotPublication => "BallotPublication",
            PostKind::PairRecord => "PairRecord",
            PostKind::BeaconRecord => "BeaconRecord",
            PostKind::SpoilReveal => "SpoilReveal",
            PostKind::CastReceipt => "CastReceipt",
            PostKind::ScratchNotice => "ScratchNotice",
            PostKind::GraceSpoil => "GraceSpoil",
            PostKind::Disclaimer => "Disclaimer",
            PostKind::VoterListRecord => "VoterListRecord",
            PostKind::MixRecord => "MixRecord",
            PostKind::DecryptionRecord => "DecryptionRecord",
            PostKind::OpeningRecord => "OpeningRecord",
            PostKind::TallyRecord => "TallyRecord",
            PostKind::ChallengeRecord => "ChallengeRecord",
            PostKind::ResponseRecord => "ResponseRecord",
        }
    }
}

impl fmt::Display for PostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A typed post body.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: PostKind;
}

macro_rules! record {
    ($t:ident) => {
        impl Record for $t {
            const KIND: PostKind = PostKind::$t;
        }
    };
}

/// Advance commitment to one encrypted ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotPublication {
    pub longcode: Bytes32,
    pub sections: Vec<PublicSection>,
    /// Key for signed challenges on a single-column ballot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_key: Option<Element>,
}

/// Two published ballots joined into one physical ballot, labels fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub ballot_id: Bytes32,
    pub a: Bytes32,
    pub b: Bytes32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_key: Option<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconRecord {
    #[serde(with = "crate::hash::hex_bytes")]
    pub beacon: Vec<u8>,
}

/// The secrets of a spoiled column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoilReveal {
    pub ballot_id: Bytes32,
    pub column: Column,
    pub longcode: Bytes32,
    pub seed: Bytes32,
    pub true_randomness: Vec<Bytes32>,
    pub skipped: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastReceipt {
    pub ballot_id: Bytes32,
    /// Longcode of the column whose cells were cast.
    pub column: Bytes32,
    /// Sorted shortcodes of the selected candidates, per section.
    pub codes: BTreeMap<String, Vec<String>>,
}

/// A ballot returned with a scratch surface removed; it is duplicated rather than cast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScratchNotice {
    pub ballot_id: Bytes32,
    /// Last board sequence number at which a grace spoil is accepted.
    pub grace_until: u64,
}

/// A voter spoiled a duplicated or disclaimed ballot; `spoiled` is the cast
/// column withdrawn from the tally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraceSpoil {
    pub ballot_id: Bytes32,
    pub spoiled: Bytes32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disclaimer {
    pub ballot_id: Bytes32,
    pub section: String,
    pub grace_until: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoterListRecord {
    pub voters: u64,
    pub digest: Bytes32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixRecord {
    pub contest: String,
    /// Head of the board when the proof was made; equals the post's `prev_hash`.
    pub board_head: Bytes32,
    pub input: Vec<Vec<Element>>,
    pub output: Vec<Vec<Element>>,
    pub proof: MixProof,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecryptionRecord {
    pub contest: String,
    pub ciphertexts: Vec<Vec<Ciphertext>>,
    pub shares: Vec<Vec<Vec<DecryptionShare>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenedCell {
    pub s_elem: Element,
    /// `None` when no admissible total opens the commitment.
    pub m: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpeningRecord {
    pub contest: String,
    pub openings: Vec<Vec<OpenedCell>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRecord {
    pub results: Vec<ContestResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeRecord {
    pub evidence: PartialEvidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub challenge_seq: u64,
    pub ciphertext: Ciphertext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<ValidityProof>,
}

record!(BallotPublication);
record!(PairRecord);
record!(BeaconRecord);
record!(SpoilReveal);
record!(CastReceipt);
record!(ScratchNotice);
record!(GraceSpoil);
record!(Disclaimer);
record!(VoterListRecord);
record!(MixRecord);
record!(DecryptionRecord);
record!(OpeningRecord);
record!(TallyRecord);
record!(ChallengeRecord);
record!(ResponseRecord);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub seq: u64,
    pub prev_hash: Bytes32,
    pub kind: PostKind,
    pub body: serde_json::Value,
    pub post_hash: Bytes32,
}

pub fn post_hash(seq: u64, prev_hash: &Bytes32, kind: PostKind, body: &serde_json::Value) -> Bytes32 {
    let canonical = serde_json::to_vec(body).expect("JSON values serialize");
    Bytes32(tagged_hash("rv/post", &[&seq.to_be_bytes(), &prev_hash.0, kind.name().as_bytes(), &canonical]))
}

impl Post {
    pub fn decode<R: Record>(&self) -> Result<R, BoardError> {
        if self.kind != R::KIND {
            return Err(BoardError::Body { seq: self.seq, kind: R::KIND, msg: format!("post is a {}", self.kind) });
        }
        serde_json::from_value(self.body.clone())
            .map_err(|e| BoardError::Body { seq: self.seq, kind: self.kind, msg: e.to_string() })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoardLog {
    posts: Vec<Post>,
}

impl BoardLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Sequence number the next post will receive.
    pub fn next_seq(&self) -> u64 {
        self.posts.len() as u64
    }

    pub fn head(&self) -> Bytes32 {
        self.posts.last().map_or(Bytes32::ZERO, |p| p.post_hash)
    }

    pub fn append<R: Record>(&mut self, body: &R) -> &Post {
        let value = serde_json::to_value(body).expect("records serialize");
        self.append_raw(R::KIND, value).expect("records serialize to objects")
    }

    /// Appends an untyped body; the body must be a JSON object.
    pub fn append_raw(&mut self, kind: PostKind, body: serde_json::Value) -> Result<&Post, BoardError> {
        if !body.is_object() {
            return Err(BoardError::NotCanonical);
        }
        let seq = self.next_seq();
        let prev_hash = self.head();
        let post_hash = post_hash(seq, &prev_hash, kind, &body);
        self.posts.push(Post { seq, prev_hash, kind, body, post_hash });
        Ok(self.posts.last().unwrap())
    }

    /// `Err(seq)` names the first post whose hash or linkage is wrong.
    pub fn verify_chain(&self) -> Result<(), u64> {
        verify_posts(&self.posts)
    }

    /// Typed bodies of every post of kind `R`, with their sequence numbers.
    pub fn records<R: Record>(&self) -> Result<Vec<(u64, R)>, BoardError> {
        self.posts.iter().filter(|p| p.kind == R::KIND).map(|p| Ok((p.seq, p.decode()?))).collect()
    }

    /// Builds a log from posts without re-hashing; use [`BoardLog::verify_chain`] to check it.
    pub fn from_posts(posts: Vec<Post>) -> Self {
        BoardLog { posts }
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.posts {
            let v = serde_json::to_value(p).expect("posts serialize");
            out.push_str(&serde_json::to_string(&v).expect("values serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BoardError> {
        Self::read(text.as_bytes())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, BoardError> {
        let mut posts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(&line).map_err(|e| BoardError::Parse { line: i + 1, msg: e.to_string() })?;
            posts.push(post);
        }
        Ok(BoardLog { posts })
    }

    pub fn save(&self, path: &Path) -> Result<(), BoardError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BoardError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn verify_posts(posts: &[Post]) -> Result<(), u64> {
    let mut prev = Bytes32::ZERO;
    for (i, p) in posts.iter().enumerate() {
        let i = i as u64;
        if p.seq != i || p.prev_hash != prev || post_hash(p.seq, &p.prev_hash, p.kind, &p.body) != p.post_hash {
            return Err(i);
        }
        prev = p.post_hash;
    }
    Ok(())
}

/// Every typed record on a board, decoded once.
#[derive(Debug, Clone, Default)]
pub struct BoardIndex {
    pub publications: BTreeMap<Bytes32, (u64, BallotPublication)>,
    /// Repeated publications of an already-published longcode.
    pub republished: Vec<u64>,
    pub pairs: BTreeMap<Bytes32, (u64, PairRecord)>,
    pub pair_list: Vec<(u64, PairRecord)>,
    pub beacons: Vec<(u64, BeaconRecord)>,
    pub reveals: Vec<(u64, SpoilReveal)>,
    pub receipts: Vec<(u64, CastReceipt)>,
    pub notices: Vec<(u64, ScratchNotice)>,
    pub grace_spoils: Vec<(u64, GraceSpoil)>,
    pub disclaimers: Vec<(u64, Disclaimer)>,
    pub voter_lists: Vec<(u64, VoterListRecord)>,
    pub mixes: Vec<(u64, MixRecord)>,
    pub decryptions: Vec<(u64, DecryptionRecord)>,
    pub openings: Vec<(u64, OpeningRecord)>,
    pub tallies: Vec<(u64, TallyRecord)>,
    pub challenges: Vec<(u64, ChallengeRecord)>,
    pub responses: Vec<(u64, ResponseRecord)>,
    pub len: u64,
}

impl BoardIndex {
    pub fn build(board: &BoardLog) -> Result<Self, BoardError> {
        let mut ix = BoardIndex { len: board.len() as u64, ..Default::default() };
        for p in board.posts() {
            let s = p.seq;
            match p.kind {
                PostKind::BallotPublication => {
                    let r: BallotPublication = p.decode()?;
                    match ix.publications.entry(r.longcode) {
                        Entry::Occupied(_) => ix.republished.push(s),
                        Entry::Vacant(v) => {
                            v.insert((s, r));
                        }
                    }
                }
                PostKind::PairRecord => {
                    let r: PairRecord = p.decode()?;
                    ix.pairs.entry(r.ballot_id).or_insert((s, r.clone()));
                    ix.pair_list.push((s, r));
                }
                PostKind::BeaconRecord => ix.beacons.push((s, p.decode()?)),
                PostKind::SpoilReveal => ix.reveals.push((s, p.decode()?)),
                PostKind::CastReceipt => ix.receipts.push((s, p.decode()?)),
                PostKind::ScratchNotice => ix.notices.push((s, p.decode()?)),
                PostKind::GraceSpoil => ix.grace_spoils.push((s, p.decode()?)),
                PostKind::Disclaimer => ix.disclaimers.push((s, p.decode()?)),
                PostKind::VoterListRecord => ix.voter_lists.push((s, p.decode()?)),
                PostKind::MixRecord => ix.mixes.push((s, p.decode()?)),
                PostKind::DecryptionRecord => ix.decryptions.push((s, p.decode()?)),
                PostKind::OpeningRecord => ix.openings.push((s, p.decode()?)),
                PostKind::TallyRecord => ix.tallies.push((s, p.decode()?)),
                PostKind::ChallengeRecord => ix.challenges.push((s, p.decode()?)),
                PostKind::ResponseRecord => ix.responses.push((s, p.decode()?)),
            }
        }
        Ok(ix)
    }

    pub fn beacon(&self) -> Option<&(u64, BeaconRecord)> {
        self.beacons.first()
    }

    /// Column longcodes of a physical ballot: its pair, or itself if it is a single published ballot.
    pub fn columns(&self, ballot_id: &Bytes32) -> Option<Vec<Bytes32>> {
        if let Some((_, p)) = self.pairs.get(ballot_id) {
            return Some(vec![p.a, p.b]);
        }
        self.publications.contains_key(ballot_id).then(|| vec![*ballot_id])
    }

    pub fn verification_key(&self, ballot_id: &Bytes32) -> Option<Element> {
        if let Some((_, p)) = self.pairs.get(ballot_id) {
            return p.verification_key;
        }
        self.publications.get(ballot_id).and_then(|(_, p)| p.verification_key)
    }

    pub fn publication(&self, longcode: &Bytes32) -> Option<&BallotPublication> {
        self.publications.get(longcode).map(|(_, p)| p)
    }

    pub fn reveal_for(&self, ballot_id: &Bytes32) -> Option<&SpoilReveal> {
        self.reveals.iter().find(|(_, r)| r.ballot_id == *ballot_id).map(|(_, r)| r)
    }

    pub fn receipts_for(&self, ballot_id: &Bytes32) -> Vec<&CastReceipt> {
        self.receipts.iter().filter(|(_, r)| r.ballot_id == *ballot_id).map(|(_, r)| r).collect()
    }

    pub fn notice_for(&self, ballot_id: &Bytes32) -> Option<&(u64, ScratchNotice)> {
        self.notices.iter().find(|(_, n)| n.ballot_id == *ballot_id)
    }

    pub fn tally_seq(&self) -> Option<u64> {
        self.tallies.first().map(|(s, _)| *s)
    }

    /// Receipts that feed the tally: every receipt whose column was not grace-spoiled.
    pub fn counted_receipts(&self) -> Vec<&CastReceipt> {
        let spoiled: std::collections::BTreeSet<Bytes32> = self.grace_spoils.iter().map(|(_, g)| g.spoiled).collect();
        self.receipts.iter().map(|(_, r)| r).filter(|r| !spoiled.contains(&r.column)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BoardLog {
        let mut log = BoardLog::new();
        for i in 0..5u8 {
            log.append(&BeaconRecord { beacon: vec![i; 4] });
        }
        log
    }

    #[test]
    fn appends_chain() {
        let mut log = BoardLog::new();
        let first = log.append(&BeaconRecord { beacon: vec![1] }).clone();
        assert_eq!(first.seq, 0);
        assert_eq!(first.prev_hash, Bytes32::ZERO);
        let second = log.append(&BeaconRecord { beacon: vec![2] }).clone();
        assert_eq!(second.seq, 1);
        assert_eq!(second.prev_hash, first.post_hash);
        assert_eq!(log.verify_chain(), Ok(()));
    }

    #[test]
    fn post_hash_reference_value() {
        let mut log = BoardLog::new();
        let p = log.append(&BeaconRecord { beacon: vec![0xab] }).clone();
        let expected = tagged_hash(
            "rv/post",
            &[&0u64.to_be_bytes(), &[0u8; 32], b"BeaconRecord", br#"{"beacon":"ab"}"#],
        );
        assert_eq!(p.post_hash.0, expected);
    }

    #[test]
    fn mutation_is_localized() {
        let mut posts = sample().into_posts();
        posts[3].body = serde_json::json!({"beacon": "ff"});
        assert_eq!(BoardLog::from_posts(posts).verify_chain(), Err(3));
        let mut posts = sample().into_posts();
        posts.swap(1, 2);
        assert_eq!(BoardLog::from_posts(posts).verify_chain(), Err(1));
    }

    #[test]
    fn tail_truncation_is_invisible_to_the_chain() {
        let mut posts = sample().into_posts();
        posts.pop();
        assert_eq!(BoardLog::from_posts(posts).verify_chain(), Ok(()));
    }

    #[test]
    fn jsonl_roundtrip_with_sorted_keys() {
        let mut log = sample();
        log.append(&ScratchNotice { ballot_id: Bytes32::digest("x", &[]), grace_until: 9 });
        let text = log.to_jsonl();
        let first = text.lines().next().unwrap();
        let keys: Vec<usize> = ["body", "kind", "post_hash", "prev_hash", "seq"].iter().map(|k| first.find(k).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back = BoardLog::from_jsonl(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.verify_chain(), Ok(()));
        assert_eq!(back.records::<ScratchNotice>().unwrap()[0].1.grace_until, 9);
    }

    #[test]
    fn raw_bodies_must_be_objects() {
        let mut log = BoardLog::new();
        assert!(matches!(log.append_raw(PostKind::BeaconRecord, serde_json::json!([1])), Err(BoardError::NotCanonical)));
        log.append_raw(PostKind::CastReceipt, serde_json::json!({"bogus": 1})).unwrap();
        assert!(matches!(BoardIndex::build(&log), Err(BoardError::Body { seq: 0, .. })));
    }
}
