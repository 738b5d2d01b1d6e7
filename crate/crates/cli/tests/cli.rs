use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TEST_ROWS: &[(&str, &str)] = &[
    ("a great and moving film", "1"),
    ("dull, slow and bad", "0"),
    ("fun cast and a wonderful ending", "1"),
    ("an awful, boring mess", "0"),
    ("not bad at all", "1"),
    ("the plot is terrible", "0"),
    ("charming and funny", "1"),
    ("a tedious waste of time", "0"),
    ("brilliant acting throughout", "1"),
    ("weak script, worse direction", "0"),
    ("lovely to look at", "1"),
    ("painfully boring", "0"),
];

const TRAIN_ROWS: &[(&str, &str)] = &[
    ("a wonderful, moving story", "1"),
    ("boring and bad", "0"),
    ("great fun", "1"),
    ("awful acting", "0"),
];

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(mode: &str, agents: &[&str], extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let tsv = |rows: &[(&str, &str)]| rows.iter().map(|(t, l)| format!("{t}\t{l}\n")).collect::<String>();
        std::fs::write(dir.path().join("test.tsv"), tsv(TEST_ROWS)).unwrap();
        std::fs::write(dir.path().join("train.tsv"), tsv(TRAIN_ROWS)).unwrap();
        let mut toml = format!(
            "out = \"out\"\n{extra}\n[mode]\nkind = \"{mode}\"\nagents = {agents:?}\n\n\
             [[datasets]]\nname = \"sst2\"\npath = \"test.tsv\"\ntrain = \"train.tsv\"\n\n\
             [negotiation]\nk_demos = 2\n"
        );
        for id in ["a", "b", "c"] {
            toml.push_str(&format!("\n[[agents]]\nid = \"{id}\"\nkind = \"lexicon\"\n"));
        }
        std::fs::write(dir.path().join("run.toml"), toml).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_negotiate"))
            .args(args)
            .arg("--config")
            .arg(self.path("run.toml"))
            .output()
            .unwrap()
    }

    fn records(&self) -> Vec<Value> {
        std::fs::read_to_string(self.path("out/transcripts.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_transcripts_and_reports() {
    let f = Fixture::new("dual_with_arbitration", &["a", "b", "c"], "");
    let o = f.run(&["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(f.path("out/report.md").is_file());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(f.path("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["results"][0]["mode"], "dual_with_arbitration");
    let records = f.records();
    assert_eq!(records.len(), TEST_ROWS.len());
    let correct = records.iter().filter(|r| r["correct"] == true).count() as f64;
    let reported = report["results"][0]["accuracy"].as_f64().unwrap();
    assert_eq!(reported, correct / records.len() as f64);
    assert!(stdout(&o).contains("dual_with_arbitration (a+b+c)"));
}

#[test]
fn limit_flag_overrides_the_file() {
    let f = Fixture::new("self_negotiation", &["a"], "limit = 3");
    let o = f.run(&["run", "--limit", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(f.records().len(), 10);
    let o = f.run(&["run"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(f.records().len(), 3);
}

#[test]
fn unknown_agent_is_a_config_error() {
    let f = Fixture::new("dual_negotiation", &["a", "nobody"], "");
    let o = f.run(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("config:"), "{}", stderr(&o));
    assert!(!f.path("out").exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let f = Fixture::new("vanilla_icl", &["a"], "");
    std::fs::remove_file(f.path("run.toml")).unwrap();
    let o = f.run(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("config:"));
}

#[test]
fn no_reasoning_leaves_no_rationale_anywhere() {
    let f = Fixture::new("dual_with_arbitration", &["a", "b", "c"], "");
    let o = f.run(&["run", "--no-reasoning"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(f.path("out/transcripts.jsonl")).unwrap();
    assert!(!text.contains("Rationale:"));
    let o = f.run(&["run"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(f.path("out/transcripts.jsonl")).unwrap();
    assert!(text.contains("Rationale:"));
}

#[test]
fn inspect_prints_one_session() {
    let f = Fixture::new("dual_negotiation", &["a", "b"], "");
    assert_eq!(f.run(&["run", "--limit", "4"]).status.code(), Some(0));
    let transcripts = f.path("out/transcripts.jsonl");
    let t = transcripts.to_str().unwrap();

    let o = f.run(&["inspect", t, "sst2:4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let page = stdout(&o);
    assert!(page.starts_with("input sst2:4 (gold negative)"), "{page}");
    assert!(page.contains("role-flipped negotiation: generator b, discriminator a"));
    assert!(page.contains("final: "));

    let o = f.run(&["inspect", t, "sst2:99"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("not-found:"));

    let mut text = std::fs::read_to_string(&transcripts).unwrap();
    text.push_str("{\"broken\n");
    std::fs::write(&transcripts, text).unwrap();
    let o = f.run(&["inspect", t, "sst2:4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

fn table_rows(md: &str, after: &str) -> Vec<String> {
    md.split(after)
        .nth(1)
        .unwrap_or("")
        .lines()
        .skip_while(|l| !l.starts_with('|'))
        .take_while(|l| l.starts_with('|'))
        .skip(2)
        .map(str::to_string)
        .collect()
}

#[test]
fn ablations_emit_their_tables() {
    let f = Fixture::new("dual_negotiation", &["a", "b"], "");
    let o = f.run(&["ablate", "roles", "--limit", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = std::fs::read_to_string(f.path("out/report.md")).unwrap();
    let rows = table_rows(&md, "## Role assignment");
    assert_eq!(rows.len(), 6, "{md}");
    assert!(rows[0].starts_with("| sst2 | a | - |"), "{}", rows[0]);
    assert!(rows[3].starts_with("| sst2 | a | b |"), "{}", rows[3]);

    let o = f.run(&["ablate", "reasoning", "--limit", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = std::fs::read_to_string(f.path("out/report.md")).unwrap();
    let rows = table_rows(&md, "## Reasoning");
    let marks: Vec<&str> = rows.iter().map(|r| r.split(" | ").nth(2).unwrap()).collect();
    assert_eq!(marks, ["w", "wo", "w", "wo", "w", "wo"], "{md}");

    let o = f.run(&["ablate", "consensus", "--limit", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = std::fs::read_to_string(f.path("out/report.md")).unwrap();
    assert!(md.contains("| Ga-Db | Gb-Da |"), "{md}");
}

#[test]
fn scripted_agents_replay_their_files() {
    let f = Fixture::new("dual_negotiation", &["s", "t"], "");
    let write = |name: &str, items: &[&str]| {
        std::fs::write(f.path(name), serde_json::to_string(items).unwrap()).unwrap();
    };
    write("s.json", &["The input contains positive sentiment.", "Yes."]);
    write("t.json", &["Yes.", "The input contains positive sentiment."]);
    let mut toml = std::fs::read_to_string(f.path("run.toml")).unwrap();
    toml = toml.replace("train = \"train.tsv\"\n", "");
    for id in ["s", "t"] {
        toml.push_str(&format!("\n[[agents]]\nid = \"{id}\"\nkind = \"scripted\"\nscript = \"{id}.json\"\n"));
    }
    std::fs::write(f.path("run.toml"), toml).unwrap();
    let o = f.run(&["run", "--limit", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let records = f.records();
    assert_eq!(records[0]["provenance"], "agreement");
    assert_eq!(records[0]["final"], "positive");
}

fn convert(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negotiate"))
        .current_dir(dir)
        .arg("convert-dataset")
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn convert_dataset_normalizes_glue() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("dev.tsv"), "sentence\tlabel\nit 's a charming journey . \t1\nflat . \t0\n").unwrap();
    let o = convert(&["sst2", "dev.tsv", "sst2.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("wrote 2 examples"));
    let text = std::fs::read_to_string(dir.path().join("sst2.tsv")).unwrap();
    assert_eq!(text.lines().count(), 2);

    let o = convert(&["sst2", "dev.tsv", "x.tsv", "--format", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
