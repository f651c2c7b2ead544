use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn claimlens(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_claimlens"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = claimlens(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn entry(code: &str) -> String {
    let tax = claimlens_core::Taxonomy::default_cards();
    serde_json::to_string(tax.entry(code.parse().unwrap()).unwrap()).unwrap()
}

/// A config with two mock backends: one echoing the gold labels, one that
/// always answers with chatter.
fn setup(dir: &Path) {
    let gold: Vec<(&str, &str)> = vec![
        ("g1", "0_0"),
        ("g2", "1_1"),
        ("g3", "2_3"),
        ("g4", "5_2"),
        ("g5", "0_0"),
        ("g6", "4_4"),
    ];
    let mut lines = String::new();
    let mut table = serde_json::Map::new();
    for (id, label) in &gold {
        lines.push_str(&json!({"id": id, "text": format!("Paragraph {id} about the climate."), "claim": label}).to_string());
        lines.push('\n');
        table.insert(id.to_string(), Value::String(entry(label)));
    }
    fs::write(dir.join("gold.jsonl"), lines).unwrap();
    fs::write(dir.join("echo.json"), Value::Object(table).to_string()).unwrap();
    fs::write(
        dir.join("mbfc.csv"),
        "domain,category\nbad.example,Questionable Source\n",
    )
    .unwrap();
    fs::write(
        dir.join("config.toml"),
        r#"
replacement_seed = 7
sample_seed = 8
sample_size = 2
mbfc = "mbfc.csv"

[gold]
id_column = "id"

[[backends]]
name = "echo"
kind = "mock"
mock_table = "echo.json"
mock_default = "0_0"

[[backends]]
name = "chatter"
kind = "mock"
mock_default = "I am not sure what you mean."
"#,
    )
    .unwrap();
    let corpus = [
        json!({"url": "https://bad.example/1", "headline": "Climate hoax", "body": "Global warming stopped years ago, they claim.\n\nThe data says otherwise, of course."}),
        json!({"url": "https://good.example/2", "headline": "Climate news", "body": "A calm report on climate change and its effects."}),
    ];
    let corpus: String = corpus.iter().map(|v| v.to_string() + "\n").collect();
    fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
}

#[test]
fn evaluate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let table = ok(
        d,
        &[
            "--config",
            "config.toml",
            "evaluate",
            "--gold",
            "gold.jsonl",
            "--out",
            "report.json",
            "--results-dir",
            "results",
        ],
    );
    let rows: Vec<&str> = table.lines().collect();
    assert!(
        rows.iter()
            .any(|l| l.starts_with("echo") && l.ends_with("1.00  1.00  1.00")),
        "{table}"
    );
    let echo_row = rows.iter().position(|l| l.starts_with("echo")).unwrap();
    let chatter_row = rows.iter().position(|l| l.starts_with("chatter")).unwrap();
    assert!(echo_row < chatter_row);
    assert!(d.join("results/echo.jsonl").exists());

    let report: Value =
        serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["backends"][0]["validity"]["rate"], 1.0);
    assert_eq!(report["backends"][1]["validity"]["rate"], 0.0);
    assert_eq!(report["replacement_seed"], 7);

    let rendered = ok(d, &["report", "--in", "report.json"]);
    assert_eq!(rendered, table);
    let as_json: Value = serde_json::from_str(&ok(
        d,
        &["report", "--in", "report.json", "--format", "json"],
    ))
    .unwrap();
    assert_eq!(as_json, report);

    // The same inputs give the same bytes.
    ok(
        d,
        &[
            "--config",
            "config.toml",
            "evaluate",
            "--gold",
            "gold.jsonl",
            "--out",
            "again.json",
        ],
    );
    assert_eq!(
        fs::read(d.join("report.json")).unwrap(),
        fs::read(d.join("again.json")).unwrap()
    );

    let sub = ok(
        d,
        &[
            "--config",
            "config.toml",
            "--level",
            "sub",
            "evaluate",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert!(sub
        .lines()
        .any(|l| l.starts_with("echo") && l.ends_with("1.00  1.00  1.00")));
}

#[test]
fn run_then_sample_and_finetune_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    // Answer no-claim for the first paragraph and 1_1 for the second.
    ok(
        d,
        &[
            "--config",
            "config.toml",
            "ingest",
            "--in",
            "corpus.jsonl",
            "--out",
            "paras.jsonl",
        ],
    );
    let ids: Vec<String> = fs::read_to_string(d.join("paras.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["paragraph_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let table = json!({ids[0].clone(): entry("0_0"), ids[1].clone(): entry("1_1")});
    fs::write(d.join("echo.json"), table.to_string()).unwrap();
    ok(
        d,
        &[
            "--config",
            "config.toml",
            "run",
            "--corpus",
            "corpus.jsonl",
            "--out-dir",
            "out",
        ],
    );
    let funnel: Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/funnel.json")).unwrap()).unwrap();
    assert_eq!(funnel["articles"], 2);
    assert_eq!(funnel["low_credibility"], 1);
    assert_eq!(funnel["paragraphs"], 2);
    assert_eq!(funnel["sampled"], 2);
    let results = fs::read_to_string(d.join("out/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 2);

    ok(
        d,
        &[
            "--config",
            "config.toml",
            "--seed",
            "3",
            "sample",
            "--in",
            "out/results.jsonl",
            "--n",
            "2",
            "--out",
            "s.jsonl",
            "--plan",
            "plan.json",
        ],
    );
    let plan: Value =
        serde_json::from_str(&fs::read_to_string(d.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["seed"], 3);
    assert_eq!(
        fs::read_to_string(d.join("s.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let odd = claimlens(
        d,
        &[
            "--config",
            "config.toml",
            "sample",
            "--in",
            "out/results.jsonl",
            "--n",
            "3",
            "--out",
            "x.jsonl",
        ],
    );
    assert!(!odd.status.success());
    assert!(String::from_utf8_lossy(&odd.stderr).starts_with("error:"));

    fs::write(
        d.join("labeled.jsonl"),
        "{\"text\": \"The sun drives it all.\", \"label\": \"2_1\"}\n{\"text\": \"Fine weather today.\", \"label\": \"0_0\"}\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "export-finetune",
            "--in",
            "labeled.jsonl",
            "--out",
            "ft.jsonl",
        ],
    );
    let first = fs::read(d.join("ft.jsonl")).unwrap();
    ok(
        d,
        &[
            "export-finetune",
            "--in",
            "labeled.jsonl",
            "--out",
            "ft2.jsonl",
        ],
    );
    assert_eq!(first, fs::read(d.join("ft2.jsonl")).unwrap());
    let line: Value = serde_json::from_slice(first.split(|b| *b == b'\n').next().unwrap()).unwrap();
    assert_eq!(
        line["messages"][2],
        json!({"role": "assistant", "content": "2_1"})
    );

    fs::write(
        d.join("bad.jsonl"),
        "{\"text\": \"x y z\", \"label\": \"9_9\"}\n",
    )
    .unwrap();
    let bad = claimlens(
        d,
        &[
            "export-finetune",
            "--in",
            "bad.jsonl",
            "--out",
            "bad_out.jsonl",
        ],
    );
    assert!(!bad.status.success());
    assert!(!d.join("bad_out.jsonl").exists());
}

#[test]
fn ingest_and_classify_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(
        d,
        &[
            "--config",
            "config.toml",
            "ingest",
            "--in",
            "corpus.jsonl",
            "--out",
            "paras.jsonl",
            "--funnel",
            "f.json",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("paras.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    ok(
        d,
        &[
            "--config",
            "config.toml",
            "classify",
            "--in",
            "paras.jsonl",
            "--out",
            "classified.jsonl",
            "--backend",
            "chatter",
        ],
    );
    let lines: Vec<Value> = fs::read_to_string(d.join("classified.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines
        .iter()
        .all(|l| l["replaced"] == true && l["backend_name"] == "chatter"));
    assert!(d.join("classified.journal.jsonl").exists());

    let missing = claimlens(
        d,
        &[
            "--config",
            "config.toml",
            "classify",
            "--in",
            "paras.jsonl",
            "--out",
            "c.jsonl",
            "--backend",
            "nope",
        ],
    );
    assert!(!missing.status.success());
}

#[test]
fn missing_seed_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fs::write(
        d.join("noseed.toml"),
        "[[backends]]\nname = \"m\"\nkind = \"mock\"\n",
    )
    .unwrap();
    let out = claimlens(
        d,
        &[
            "--config",
            "noseed.toml",
            "evaluate",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
