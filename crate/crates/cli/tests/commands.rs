use std::path::Path;
use std::process::{Command, Output};

fn lfuq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfuq")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DATA: &str = r#"{"prompt_id":"a","prompt":"Who was Ada?","responses":["Ada was born in 1815. She wrote notes on the engine.","Ada was born in 1815.","Ada wrote about the engine."],"factuality":0.9}
{"prompt_id":"b","prompt":"Who was Alan?","responses":["Alan worked at Bletchley Park. He was born in London and died in 1954.","Alan was born in London.","He worked at Bletchley Park."],"factuality":0.4}
{"prompt_id":"c","prompt":"Who was Grace?","responses":["Grace joined the Navy. She wrote a compiler and coined a term.","Grace served in the Navy.","Grace built compilers."],"factuality":0.2}
"#;

#[test]
fn score_eval_inspect_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.jsonl");
    std::fs::write(&data, DATA).unwrap();
    let reports = tmp.path().join("reports");
    for v in ["agsc", "luq_sentence"] {
        let out = reports.join(v);
        let o = lfuq(&["score", "--dataset", s(&data), "--out", s(&out), "--variant", v]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let table = tmp.path().join("table.csv");
    let o = lfuq(&["eval", "--reports", s(&reports), "--out", s(&table)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,pcc,scc,n,decomposer_calls,t_nli_ms,t_atom_ms,t_cluster_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("agsc,") && lines[2].starts_with("luq_sentence,"));

    let report = reports.join("agsc/0000_a.jsonl");
    let o = lfuq(&["inspect", "--report", s(&report), "--sentence", "1"]);
    assert!(o.status.success());
    let view: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(view["sentence"]["text"], "She wrote notes on the engine.");
    let o = lfuq(&["inspect", "--report", s(&report), "--sentence", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.jsonl");
    std::fs::write(&data, DATA).unwrap();
    let conf = tmp.path().join("bad.conf");
    std::fs::write(&conf, "clustering.k_limit = 15\nclustering.bogus = 1\n").unwrap();
    let o = lfuq(&["score", "--dataset", s(&data), "--config", s(&conf), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&conf, "variant = agsc\ngranularity.mode = off\n").unwrap();
    let o = lfuq(&["score", "--dataset", s(&data), "--config", s(&conf), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dataset_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.jsonl");
    std::fs::write(&data, "{\"prompt_id\":\"x\",\"prompt\":\"q\"}\n").unwrap();
    let o = lfuq(&["score", "--dataset", s(&data), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    let o = lfuq(&["score", "--dataset", s(&tmp.path().join("missing.jsonl")), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
}
