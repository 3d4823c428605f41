use std::path::PathBuf;

use clap::Parser;
use serde_json::{json, Value};
use tempfile::TempDir;

use vbm::app::{run, Cli, Output};

struct Env {
    _tmp: TempDir,
    root: PathBuf,
    dir: PathBuf,
}

impl Env {
    fn new() -> Env {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let dir = root.join("election");
        let env = Env { _tmp: tmp, root, dir };
        let config = env.file(
            "config.json",
            &json!({
                "election_id": "cli-test",
                "contests": vbm::sim::standard_contests(),
                "options": { "mix_rounds": 12 }
            }),
        );
        env.ok(&["setup", "--config", &config]);
        env
    }

    fn file(&self, name: &str, v: &Value) -> String {
        let p = self.root.join(name);
        std::fs::write(&p, v.to_string()).unwrap();
        p.display().to_string()
    }

    fn run(&self, args: &[&str]) -> anyhow::Result<Output> {
        let mut argv = vec!["vbm", "--dir", self.dir.to_str().unwrap(), "--seed", "3"];
        argv.extend_from_slice(args);
        run(Cli::try_parse_from(argv)?)
    }

    fn ok(&self, args: &[&str]) -> Value {
        let out = self.run(args).unwrap_or_else(|e| panic!("{args:?}: {e:#}"));
        assert!(out.success, "{args:?} reported failure:\n{}", out.text);
        serde_json::from_str(&out.text).unwrap()
    }

    fn print(&self, form: &str) -> String {
        self.ok(&["ballot", "print", "--form", form])["path"].as_str().unwrap().to_string()
    }

    fn cast(&self, ballot: &str, marks: &Value) -> Value {
        let m = self.file("marks.json", marks);
        self.ok(&["safevote", "return", "--ballot", ballot, "--marks", &m])
    }

    fn voters(&self, names: &[&str]) {
        let p = self.root.join("voters.txt");
        std::fs::write(&p, names.join("\n")).unwrap();
        self.ok(&["board", "voters", "--names", p.to_str().unwrap()]);
    }

    fn finish(&self) -> Value {
        self.ok(&["tally", "mix", "--lambda", "12"]);
        self.ok(&["tally", "open"]);
        self.ok(&["verify"])
    }
}

fn printed(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn plurality(results: &Value, contest: &str) -> Vec<u64> {
    let r = results.as_array().unwrap().iter().find(|r| r["contest"] == contest).unwrap();
    serde_json::from_value(r["counts"].clone()).unwrap_or_else(|_| panic!("no counts in {r}"))
}

#[test]
fn remotevote_election_end_to_end() {
    let env = Env::new();
    assert_eq!(env.ok(&["remotevote", "pair", "--count", "3"]).as_array().unwrap().len(), 3);
    assert_eq!(env.ok(&["remotevote", "spoil", "--beacon", "c0ffee"])["reveals"], 3);

    let marks = [
        json!({"mayor": [2], "parks": [0, 1], "council": [1, 0]}),
        json!({"mayor": [2], "parks": [1], "council": [1]}),
        json!({"mayor": [0], "parks": [], "council": [0, 2, 1]}),
    ];
    for m in &marks {
        let ballot = env.print("remotevote");
        let id = printed(&ballot)["ballot_id"].as_str().unwrap().to_string();
        let image = env.ok(&["remotevote", "image", "--ballot-id", &id, "--ballot", &ballot]);
        assert_eq!(image["mismatches"], json!([]));
        assert!(env.cast(&ballot, m).get("Cast").is_some());
    }
    env.voters(&["ann", "ben", "cy"]);
    let report = env.finish();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["status"] == "pass"), "{report}");

    let results = env.ok(&["tally", "result", "--method", "plurality"]);
    assert_eq!(plurality(&results, "mayor"), vec![1, 0, 2, 0]);
    assert_eq!(plurality(&results, "parks"), vec![1, 2, 0]);
    let irv = env.ok(&["tally", "result", "--method", "irv"]);
    assert_eq!(irv.as_array().unwrap().len(), 1);
    assert!(env.run(&["board", "verify"]).unwrap().success);
}

#[test]
fn image_flags_a_misprinted_ballot() {
    let env = Env::new();
    env.ok(&["remotevote", "pair", "--count", "1"]);
    env.ok(&["remotevote", "spoil", "--beacon", "01"]);
    let ballot = env.print("remotevote");
    let mut p = printed(&ballot);
    let id = p["ballot_id"].as_str().unwrap().to_string();
    let codes = &mut p["sections"][0]["rows"];
    let a = codes[0]["codes"].clone();
    codes[0]["codes"] = codes[1]["codes"].clone();
    codes[1]["codes"] = a;
    let bad = env.file("bad.json", &p);
    let out = env.run(&["remotevote", "image", "--ballot-id", &id, "--ballot", &bad]).unwrap();
    assert!(!out.success);
}

fn seed_for(env: &Env, ballot: &str) -> Option<String> {
    let secrets: Value = serde_json::from_str(&std::fs::read_to_string(env.dir.join("secrets.json")).unwrap()).unwrap();
    secrets["ballots"].as_array().unwrap().iter().map(|b| b["seed"].as_str().unwrap().to_string()).find(|seed| {
        env.run(&["safevote", "challenge", "--ballot", ballot, "--r", seed]).map(|o| o.success).unwrap_or(false)
    })
}

#[test]
fn safevote_challenge_scratch_and_grace() {
    let env = Env::new();
    env.ok(&["ballot", "gen", "--count", "6", "--form", "safevote"]);

    // an audited ballot is consistent with exactly its own randomness
    let audited = env.print("safevote");
    assert!(seed_for(&env, &audited).is_some());

    let first = env.print("safevote");
    let m = env.file("m1.json", &json!({"mayor": [1], "parks": [2], "council": [0]}));
    let d = env.ok(&["safevote", "return", "--ballot", &first, "--marks", &m, "--scratched"]);
    assert!(d["Duplicated"]["duplicate"].is_string(), "{d}");
    let id = printed(&first)["ballot_id"].as_str().unwrap().to_string();
    env.ok(&["safevote", "grace-spoil", "--id", &id]);

    let second = env.print("safevote");
    env.cast(&second, &json!({"mayor": [3], "parks": [0, 1], "council": [2, 1]}));
    let third = env.print("safevote");
    env.cast(&third, &json!({"mayor": [3], "parks": [], "council": []}));
    env.voters(&["dee", "eve"]);
    let report = env.finish();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["status"] == "pass"), "{report}");
    let results = env.ok(&["tally", "result", "--method", "plurality"]);
    assert_eq!(plurality(&results, "mayor"), vec![0, 0, 0, 2]);
}

#[test]
fn fabricated_dispute_is_answered_and_vindicated() {
    let env = Env::new();
    env.ok(&["ballot", "gen", "--count", "2"]);
    let ballot = env.print("safevote");
    env.cast(&ballot, &json!({"mayor": [0], "parks": [1], "council": [1]}));

    // codes already on the receipt cannot be disputed
    assert!(env.run(&["dispute", "file", "--ballot", &ballot, "--section", "mayor", "--candidate", "0"]).is_err());

    let fake = "11".repeat(16);
    let seq = env.ok(&["dispute", "file", "--ballot", &ballot, "--section", "mayor", "--candidate", "2", "--partial", &fake])["seq"]
        .as_u64()
        .unwrap()
        .to_string();
    assert_eq!(env.ok(&["dispute", "adjudicate", "--challenge", &seq])["verdict"], Value::Null);
    env.ok(&["dispute", "respond", "--challenge", &seq]);
    assert_eq!(env.ok(&["dispute", "adjudicate", "--challenge", &seq])["verdict"], "AuthorityVindicated");
}

#[test]
fn disclaimer_is_posted() {
    let env = Env::new();
    env.ok(&["ballot", "gen", "--count", "1"]);
    let ballot = env.print("safevote");
    let id = printed(&ballot)["ballot_id"].as_str().unwrap().to_string();
    env.cast(&ballot, &json!({"mayor": [0], "parks": [], "council": []}));
    let seq = env.ok(&["dispute", "disclaim", "--id", &id, "--section", "mayor"])["seq"].as_u64().unwrap();
    assert!(seq > 0);
    let report = env.run(&["verify"]).unwrap();
    let report: Value = serde_json::from_str(&report.text).unwrap();
    assert_eq!(report["disclaimed"], 1, "{report}");
}

#[test]
fn verify_exits_unsuccessfully_on_a_tampered_board() {
    let env = Env::new();
    env.ok(&["ballot", "gen", "--count", "1"]);
    let board = env.dir.join("board.jsonl");
    let text = std::fs::read_to_string(&board).unwrap();
    let tampered = tamper_line(&text);
    let copy = env.root.join("tampered.jsonl");
    std::fs::write(&copy, tampered).unwrap();
    let out = env.run(&["verify", "--board", copy.to_str().unwrap()]).unwrap();
    assert!(!out.success);
    assert!(!env.run(&["board", "verify", copy.to_str().unwrap()]).unwrap().success);
}

fn tamper_line(text: &str) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let last = lines.last_mut().unwrap();
    let mut v: Value = serde_json::from_str(last).unwrap();
    v["seq"] = json!(v["seq"].as_u64().unwrap() + 7);
    *last = v.to_string();
    lines.join("\n") + "\n"
}

#[test]
fn mix_rejects_a_lambda_other_than_the_manifest() {
    let env = Env::new();
    assert!(env.run(&["tally", "mix", "--lambda", "5"]).is_err());
}

#[test]
fn simulate_reports_a_rate() {
    let env = Env::new();
    let cfg = env.file("sim.json", &json!({"scheme": "hybrid", "voters": 4, "mix_rounds": 8, "trials": 3, "seed": 9}));
    let out = env.ok(&["simulate", "--config", &cfg, "--trials", "2"]);
    assert_eq!(out["outcomes"].as_array().unwrap().len(), 2);
    assert_eq!(out["detection_rate"], 0.0);
}
