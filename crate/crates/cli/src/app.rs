//! Command implementations over a working directory holding `manifest.json`,
//! `secrets.json`, `board.jsonl` and printed ballots under `ballots/`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use vbm_core::authority::{Authority, AuthoritySecrets};
use vbm_core::ballot::{BallotForm, PrintedBallot, RngTrng};
use vbm_core::board::{BoardIndex, BoardLog, ChallengeRecord, ResponseRecord};
use vbm_core::disputes::{adjudicate, file_challenge, sign, BallotKeypair, PartialEvidence};
use vbm_core::hash::tagged_hash;
use vbm_core::manifest::{ElectionConfig, ElectionManifest, Method};
use vbm_core::remotevote::{compare_image, reconstruct_partial_image};
use vbm_core::safevote::challenge;
use vbm_core::tally::Marks;
use vbm_core::verify::{verify_election, VerifyOptions};
use vbm_core::Bytes32;

use crate::sim::{simulate, SimulationConfig};

#[derive(Debug, Parser)]
#[command(
    name = "vbm",
    version,
    about = "Verifiable vote-by-mail toolkit",
    after_help = "The built-in group is a transparent test backend. It offers no security; do not run real elections with it."
)]
pub struct Cli {
    /// Election working directory.
    #[arg(long, global = true, default_value = ".")]
    pub dir: PathBuf,
    /// Seed for every random choice this command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate group parameters and trustee keys from an election config.
    Setup {
        #[arg(long)]
        config: PathBuf,
    },
    #[command(subcommand)]
    Ballot(BallotCmd),
    #[command(subcommand)]
    Board(BoardCmd),
    #[command(subcommand)]
    Remotevote(RemoteVoteCmd),
    #[command(subcommand)]
    Safevote(SafeVoteCmd),
    #[command(subcommand)]
    Tally(TallyCmd),
    #[command(subcommand)]
    Dispute(DisputeCmd),
    /// Run every public check on a board.
    Verify(VerifyArgs),
    /// Monte Carlo adversary simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Safevote,
    Remotevote,
    Hybrid,
}

impl From<FormArg> for BallotForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Safevote => BallotForm::SafeVote,
            FormArg::Remotevote => BallotForm::RemoteVotePair,
            FormArg::Hybrid => BallotForm::Hybrid,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum BallotCmd {
    /// Generate and publish ballots.
    Gen {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, value_enum, default_value = "safevote")]
        form: FormArg,
    },
    /// Write a printed ballot to `ballots/<id>.json`.
    Print {
        /// Ballot id; if omitted the next unissued ballot of `--form` is issued.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, value_enum, default_value = "safevote")]
        form: FormArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum BoardCmd {
    /// Check the hash chain of a board file.
    Verify { board: Option<PathBuf> },
    /// Post the count and digest of the voters whose envelopes arrived.
    Voters {
        /// One voter identifier per line.
        #[arg(long)]
        names: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum RemoteVoteCmd {
    /// Generate, publish and pair ballots.
    Pair {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        hybrid: bool,
    },
    /// Post the beacon and reveal each pair's selected column.
    Spoil {
        #[arg(long)]
        beacon: String,
    },
    /// Expected codes of a ballot's spoiled column.
    Image {
        #[arg(long)]
        ballot_id: String,
        /// Printed ballot to compare against.
        #[arg(long)]
        ballot: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SafeVoteCmd {
    /// Regenerate a column from its seed and QR payload and compare.
    Challenge {
        #[arg(long)]
        ballot: PathBuf,
        /// Seed revealed under the scratch surface.
        #[arg(long = "r")]
        r: String,
        #[arg(long, default_value_t = 0)]
        column: usize,
    },
    /// Return a marked ballot to the authority.
    Return {
        #[arg(long)]
        ballot: PathBuf,
        #[arg(long)]
        marks: PathBuf,
        /// The cast column's scratch surface was removed.
        #[arg(long)]
        scratched: bool,
    },
    GraceSpoil {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Plurality,
    Irv,
}

#[derive(Debug, Subcommand)]
pub enum TallyCmd {
    /// Per-receipt aggregate commitments.
    Aggregate,
    Mix {
        #[arg(long)]
        lambda: Option<u32>,
    },
    Open,
    Result {
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DisputeCmd {
    /// Post a signed challenge from the partial printed beside a selection.
    File {
        #[arg(long)]
        ballot: PathBuf,
        #[arg(long)]
        section: String,
        #[arg(long)]
        candidate: usize,
        /// Override the partial read off the ballot.
        #[arg(long)]
        partial: Option<String>,
    },
    Respond {
        #[arg(long)]
        challenge: u64,
    },
    Adjudicate {
        #[arg(long)]
        challenge: u64,
    },
    Disclaim {
        #[arg(long)]
        id: String,
        #[arg(long)]
        section: String,
    },
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub board: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub beacon: Option<String>,
}

/// What a command printed and whether it succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub text: String,
    pub success: bool,
}

fn json<T: Serialize>(v: &T) -> Result<Output> {
    Ok(Output { text: serde_json::to_string_pretty(v)? + "\n", success: true })
}

fn parse_id(hex_id: &str) -> Result<Bytes32> {
    let bytes = hex::decode(hex_id).context("ids are hex")?;
    Bytes32::from_slice(&bytes).context("ids are 32 bytes")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

struct Workdir {
    dir: PathBuf,
    seed: u64,
}

impl Workdir {
    fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    fn board_path(&self) -> PathBuf {
        self.dir.join("board.jsonl")
    }

    fn secrets_path(&self) -> PathBuf {
        self.dir.join("secrets.json")
    }

    fn manifest(&self) -> Result<ElectionManifest> {
        read_json(&self.manifest_path())
    }

    fn board(&self) -> Result<BoardLog> {
        Ok(BoardLog::load(&self.board_path())?)
    }

    fn authority(&self) -> Result<Authority> {
        let secrets: AuthoritySecrets = read_json(&self.secrets_path())?;
        Ok(Authority::from_secrets(self.manifest()?, secrets)?)
    }

    fn save(&self, auth: &Authority, board: &BoardLog) -> Result<()> {
        write_json(&self.secrets_path(), &auth.secrets())?;
        board.save(&self.board_path())?;
        Ok(())
    }

    /// A generator keyed by the seed, the board head and the command, so
    /// repeated steps under one seed still draw fresh values.
    fn rng(&self, board: &BoardLog, command: &str) -> ChaCha20Rng {
        let h = tagged_hash("cli/rng", &[&self.seed.to_be_bytes(), &board.head().0, command.as_bytes()]);
        ChaCha20Rng::from_seed(h)
    }

    fn print_ballot(&self, auth: &Authority, id: &Bytes32) -> Result<PathBuf> {
        let dir = self.dir.join("ballots");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.json", id.to_hex()));
        write_json(&path, &auth.print(id)?)?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<Output> {
    let wd = Workdir { dir: cli.dir.clone(), seed: cli.seed };
    match cli.command {
        Command::Setup { config } => setup(&wd, &config),
        Command::Ballot(c) => ballot(&wd, c),
        Command::Board(c) => board(&wd, c),
        Command::Remotevote(c) => remotevote(&wd, c),
        Command::Safevote(c) => safevote(&wd, c),
        Command::Tally(c) => tally(&wd, c),
        Command::Dispute(c) => dispute(&wd, c),
        Command::Verify(a) => verify(&wd, a),
        Command::Simulate { config, trials } => {
            let mut cfg: SimulationConfig = read_json(&config)?;
            cfg.seed = wd.seed;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let result = simulate(&cfg)?;
            json(&serde_json::json!({
                "trials": result.trials.len(),
                "detection_rate": result.detection_rate,
                "confidence_interval": result.confidence_interval,
                "verdicts": result.verdicts,
                "outcomes": result.trials,
            }))
        }
    }
}

fn setup(wd: &Workdir, config: &Path) -> Result<Output> {
    let cfg: ElectionConfig = read_json(config)?;
    let board = BoardLog::new();
    let (manifest, shares) = cfg.setup(&mut wd.rng(&board, "setup"))?;
    fs::create_dir_all(&wd.dir)?;
    write_json(&wd.manifest_path(), &manifest)?;
    let auth = Authority::new(manifest, shares);
    wd.save(&auth, &board)?;
    json(&serde_json::json!({ "election_id": auth.manifest.election_id, "sections": auth.manifest.sections().len() }))
}

fn ballot(wd: &Workdir, cmd: BallotCmd) -> Result<Output> {
    let mut auth = wd.authority()?;
    let mut board = wd.board()?;
    match cmd {
        BallotCmd::Gen { count, form } => {
            let mut rng = wd.rng(&board, "ballot gen");
            let ids = match BallotForm::from(form) {
                BallotForm::SafeVote => (0..count)
                    .map(|_| auth.create_single(&mut board, &mut RngTrng(&mut rng)))
                    .collect::<Result<Vec<_>, _>>()?,
                f => auth.create_pairs(&mut board, &mut RngTrng(&mut rng), count, f)?,
            };
            wd.save(&auth, &board)?;
            json(&ids)
        }
        BallotCmd::Print { id, form } => {
            let id = match id {
                Some(h) => parse_id(&h)?,
                None => auth.issue(form.into()).context("no unissued ballot of that form")?,
            };
            auth.issued.insert(id);
            let path = wd.print_ballot(&auth, &id)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "ballot_id": id, "path": path }))
        }
    }
}

fn board(wd: &Workdir, cmd: BoardCmd) -> Result<Output> {
    match cmd {
        BoardCmd::Verify { board } => {
            let log = BoardLog::load(&board.unwrap_or_else(|| wd.board_path()))?;
            Ok(match log.verify_chain() {
                Ok(()) => Output { text: format!("ok: {} posts, head {}\n", log.len(), log.head()), success: true },
                Err(seq) => Output { text: format!("hash chain broken at post {seq}\n"), success: false },
            })
        }
        BoardCmd::Voters { names } => {
            let auth = wd.authority()?;
            let mut log = wd.board()?;
            let text = fs::read_to_string(&names)?;
            let list: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            let seq = auth.post_voter_list(&mut log, &list);
            wd.save(&auth, &log)?;
            json(&serde_json::json!({ "seq": seq, "voters": list.len() }))
        }
    }
}

fn remotevote(wd: &Workdir, cmd: RemoteVoteCmd) -> Result<Output> {
    let mut auth = wd.authority()?;
    let mut board = wd.board()?;
    match cmd {
        RemoteVoteCmd::Pair { count, hybrid } => {
            let form = if hybrid { BallotForm::Hybrid } else { BallotForm::RemoteVotePair };
            let mut rng = wd.rng(&board, "remotevote pair");
            let ids = auth.create_pairs(&mut board, &mut RngTrng(&mut rng), count, form)?;
            wd.save(&auth, &board)?;
            json(&ids)
        }
        RemoteVoteCmd::Spoil { beacon } => {
            let beacon = hex::decode(&beacon).context("beacon is hex")?;
            auth.post_beacon(&mut board, &beacon)?;
            auth.spoil_all(&mut board)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "reveals": BoardIndex::build(&board)?.reveals.len() }))
        }
        RemoteVoteCmd::Image { ballot_id, ballot } => {
            let ix = BoardIndex::build(&board)?;
            let image = reconstruct_partial_image(&auth.manifest, &ix, &parse_id(&ballot_id)?)?;
            let mismatches = match ballot {
                Some(p) => compare_image(&image, &read_json::<PrintedBallot>(&p)?),
                None => Vec::new(),
            };
            let mut out = json(&serde_json::json!({ "image": image, "mismatches": mismatches }))?;
            out.success = mismatches.is_empty();
            Ok(out)
        }
    }
}

fn safevote(wd: &Workdir, cmd: SafeVoteCmd) -> Result<Output> {
    match cmd {
        SafeVoteCmd::Challenge { ballot, r, column } => {
            let printed: PrintedBallot = read_json(&ballot)?;
            let report = challenge(&wd.manifest()?, &printed, column, &parse_id(&r)?)?;
            let mut out = json(&report)?;
            out.success = report.verdict == vbm_core::safevote::ChallengeVerdict::Consistent;
            Ok(out)
        }
        SafeVoteCmd::Return { ballot, marks, scratched } => {
            let mut auth = wd.authority()?;
            let mut board = wd.board()?;
            let mut printed: PrintedBallot = read_json(&ballot)?;
            let marks: Marks = read_json(&marks)?;
            if scratched {
                let col = auth.cast_column(&printed.ballot_id)?;
                printed.scratch_off(col);
            }
            let d = auth.receive(&mut board, &printed, &marks)?;
            if let vbm_core::safevote::Disposition::Duplicated { duplicate, .. } = &d {
                wd.print_ballot(&auth, duplicate)?;
            }
            wd.save(&auth, &board)?;
            json(&d)
        }
        SafeVoteCmd::GraceSpoil { id } => {
            let mut auth = wd.authority()?;
            let mut board = wd.board()?;
            let seq = auth.grace_spoil(&mut board, &parse_id(&id)?)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "seq": seq }))
        }
    }
}

fn tally(wd: &Workdir, cmd: TallyCmd) -> Result<Output> {
    let mut auth = wd.authority()?;
    let mut board = wd.board()?;
    match cmd {
        TallyCmd::Aggregate => {
            let rows = auth.aggregate(&board)?;
            json(&vbm_core::tally::public_rows(&rows))
        }
        TallyCmd::Mix { lambda } => {
            if let Some(l) = lambda {
                if l != auth.manifest.options.mix_rounds {
                    bail!("the manifest fixes {} mix rounds", auth.manifest.options.mix_rounds);
                }
            }
            let mut rng = wd.rng(&board, "tally mix");
            auth.mix_contests(&mut board, &mut rng, None)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "mixed": auth.mixed.keys().collect::<Vec<_>>() }))
        }
        TallyCmd::Open => {
            let opened = auth.decrypt_and_open(&mut board)?;
            let record = auth.publish_results(&mut board, &opened);
            wd.save(&auth, &board)?;
            json(&record)
        }
        TallyCmd::Result { method } => {
            let ix = BoardIndex::build(&board)?;
            let (_, record) = ix.tallies.first().context("no results posted; run `tally open`")?;
            let results: Vec<_> = record
                .results
                .iter()
                .filter(|r| {
                    let m = auth.manifest.contest(&r.contest).map(|(_, c)| c.method.clone());
                    match method {
                        None => true,
                        Some(MethodArg::Plurality) => matches!(m, Some(Method::Plurality { .. })),
                        Some(MethodArg::Irv) => matches!(m, Some(Method::Irv { .. })),
                    }
                })
                .collect();
            json(&results)
        }
    }
}

fn dispute(wd: &Workdir, cmd: DisputeCmd) -> Result<Output> {
    let mut auth = wd.authority()?;
    let mut board = wd.board()?;
    let m = auth.manifest.clone();
    match cmd {
        DisputeCmd::File { ballot, section, candidate, partial } => {
            let printed: PrintedBallot = read_json(&ballot)?;
            let ix = BoardIndex::build(&board)?;
            let receipt = ix.receipts_for(&printed.ballot_id).first().map(|r| r.column).context("no receipt for this ballot")?;
            let col = printed.column_ids.iter().position(|c| *c == receipt).context("receipt names a column not on this ballot")?;
            let row = printed.section(&section).and_then(|s| s.rows.get(candidate)).context("no such row")?;
            let partial = match partial {
                Some(p) => p,
                None => row.partials.get(col).cloned().context("ballot has no partials")?,
            };
            let ev = PartialEvidence { ballot_id: printed.ballot_id, section, candidate, shortcode: row.codes[col].clone(), partial };
            let sig = printed.signing_key.map(|k| sign(&m.group, &BallotKeypair::from_secret(&m.group, k), &ev.message()));
            let record = file_challenge(&m, &ix, ev, sig)?;
            let seq = board.append(&record).seq;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "seq": seq }))
        }
        DisputeCmd::Respond { challenge } => {
            let mut rng = wd.rng(&board, "dispute respond");
            let seq = auth.respond(&mut board, challenge, &mut rng)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "seq": seq }))
        }
        DisputeCmd::Adjudicate { challenge } => {
            let ix = BoardIndex::build(&board)?;
            let post = board.posts().get(challenge as usize).context("no such post")?;
            let ch: ChallengeRecord = post.decode()?;
            let response: Option<&ResponseRecord> = ix.responses.iter().map(|(_, r)| r).find(|r| r.challenge_seq == challenge);
            let verdict = response.map(|r| adjudicate(&m, &ix, &ch, r));
            json(&serde_json::json!({ "challenge": challenge, "verdict": verdict }))
        }
        DisputeCmd::Disclaim { id, section } => {
            let seq = auth.disclaim(&mut board, &parse_id(&id)?, &section)?;
            wd.save(&auth, &board)?;
            json(&serde_json::json!({ "seq": seq }))
        }
    }
}

fn verify(wd: &Workdir, a: VerifyArgs) -> Result<Output> {
    let manifest: ElectionManifest = read_json(&a.manifest.unwrap_or_else(|| wd.manifest_path()))?;
    let board = BoardLog::load(&a.board.unwrap_or_else(|| wd.board_path()))?;
    let beacon = a.beacon.map(|b| hex::decode(b).context("beacon is hex")).transpose()?;
    let report = verify_election(&manifest, &board, &VerifyOptions { beacon });
    let mut out = json(&report)?;
    out.success = report.passed();
    Ok(out)
}
