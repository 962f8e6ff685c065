use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scriptpersona")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn prepare(root: &Path) -> (String, String) {
    let data = root.join("data");
    let out = root.join("out");
    let (data, out) = (data.to_str().unwrap().to_string(), out.to_str().unwrap().to_string());
    ok(&["synth", "--out", &data, "--scripts", "20"]);
    ok(&["parse", "--scripts", &format!("{data}/scripts"), "--out", &out]);
    ok(&["build", "--profiles", &format!("{data}/profiles.jsonl"), "--out", &out]);
    (data, out)
}

#[test]
fn parse_and_build_write_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = prepare(dir.path());
    for f in ["parses.jsonl", "silver_report.jsonl", "corpus_stats.json", "train.jsonl", "dev.jsonl", "test.jsonl", "stats.json"] {
        assert!(Path::new(&out).join(f).is_file(), "missing {f}");
    }
    let stats = ok(&["stats", "--out", &out]);
    assert!(stats.contains("characters:"));
}

#[test]
fn train_fusion_reports_every_run_and_the_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = prepare(dir.path());
    let text = ok(&["train-fusion", "--dimension", "NS", "--runs", "3", "--epochs", "2", "--set", "hidden=4", "--out", &out]);
    let run_lines = text.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).count();
    assert_eq!(run_lines, 3, "{text}");
    assert!(text.contains("N/S") && text.contains('±'), "{text}");
    let runs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join("fusion_NS_runs.json")).unwrap()).unwrap();
    assert_eq!(runs["runs"].as_array().unwrap().len(), 3);
    let eval = ok(&["eval", "-d", "NS", "--out", &out]);
    assert!(eval.contains("fusion"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = prepare(dir.path());
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "runs = 4\nepochs = 1\nhidden = 4\n").unwrap();
    ok(&["train-fusion", "-d", "EI", "--config", cfg.to_str().unwrap(), "--runs", "2", "--out", &out]);
    let runs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join("fusion_EI_runs.json")).unwrap()).unwrap();
    assert_eq!(runs["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["stats", "--set", "epochs=lots"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    assert_eq!(run(&["stats", "--out", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["parse", "--scripts", missing.to_str().unwrap(), "--out", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn training_on_a_single_pole_is_a_training_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let record = r#"{"id":"1","mbti_profile":"Neo","subcategory":"The Matrix","scale":"MBTI","personality":{"E/I":"I"},"votes":{"E/I":{"count":5,"agreement":0.9}},"dialogue":["I know kung fu."],"scene":[],"split":"train"}"#;
    std::fs::write(out.join("train.jsonl"), format!("{record}\n{record}\n")).unwrap();
    std::fs::write(out.join("dev.jsonl"), "").unwrap();
    std::fs::write(out.join("test.jsonl"), "").unwrap();
    let res = run(&["train-fusion", "-d", "EI", "--runs", "1", "--epochs", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn same_seed_gives_identical_datasets() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, oa) = prepare(a.path());
    let (_, ob) = prepare(b.path());
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "stats.json", "parses.jsonl"] {
        assert_eq!(std::fs::read(Path::new(&oa).join(f)).unwrap(), std::fs::read(Path::new(&ob).join(f)).unwrap(), "{f}");
    }
}
