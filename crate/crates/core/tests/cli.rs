use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anchorlvm::ingest::{tabulate_joint, MissingBehaviors};
use anchorlvm::synthlab::{exact_observable_distribution, GroundTruthModel};
use serde_json::Value;

fn anchorlvm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anchorlvm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn synth_t1(dir: &Path) {
    let out = anchorlvm(&["synth", "--structure", "t1", "--out-dir", "t1"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn t1_fit_and_score() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    let out = anchorlvm(&["fit", "--config", "t1/fit_config.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t1/model.report.json")).unwrap()).unwrap();
    assert_eq!(report["total_clamped"], 0);

    let out = anchorlvm(&["score", "--model", "t1/model.json", "--events", "t1/events.jsonl"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let scores = lines(&out);
    assert_eq!(scores.len(), 100);
    for (i, s) in scores.iter().enumerate() {
        assert_eq!(s["id"], i.to_string());
        let raw = s["raw"].as_f64().unwrap();
        assert!([0.0, 0.10 / 0.34, 0.40 / 0.46].iter().any(|v| (raw - v).abs() < 1e-12), "{raw}");
    }

    let key = fs::read_to_string(dir.path().join("t1/answer_key.jsonl")).unwrap();
    for (k, s) in key.lines().zip(&scores) {
        let k: Value = serde_json::from_str(k).unwrap();
        assert_eq!(k["id"], s["id"]);
        assert!((k["posterior"].as_f64().unwrap() - s["raw"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn t1_synth_writes_the_fixture_tables() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    let gt = GroundTruthModel::parse(&fs::read_to_string(dir.path().join("t1/ground_truth.json")).unwrap()).unwrap();
    for (file, prior) in [("events.jsonl", 0.5), ("randomized.jsonl", 0.0), ("algorithmic.jsonl", 0.5)] {
        let events =
            anchorlvm::ingest::load_events(&dir.path().join("t1").join(file), gt.spec(), MissingBehaviors::Reject).unwrap();
        let table = tabulate_joint(events.map(Result::unwrap), gt.spec(), 0.0).unwrap();
        let exact = exact_observable_distribution(&gt.intervene_prior(prior)).unwrap();
        for (a, b) in table.probs().iter().zip(exact.probs()) {
            assert!((a - b).abs() < 1e-15, "{file}");
        }
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    let out = anchorlvm(&["fit", "--config", "t1/fit_config.json", "--p-r", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("singular dataset priors"));

    fs::write(dir.path().join("bad.json"), r#"{"network": "t1/ground_truth.json", "evnts": "x"}"#).unwrap();
    assert_eq!(anchorlvm(&["fit", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    assert_eq!(anchorlvm(&["synth", "--structure", "bogus", "--out-dir", "x"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_events_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    let out = anchorlvm(&["fit", "--config", "t1/fit_config.json", "--events", "nowhere.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nowhere.jsonl"));
}

#[test]
fn value_insensitive_anchor_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    let quiet: String = (0..50)
        .map(|i| format!("{{\"id\":\"{i}\",\"behaviors\":{{\"A\":0,\"B\":{}}}}}\n", i % 2))
        .collect();
    fs::write(dir.path().join("quiet.jsonl"), quiet).unwrap();
    let out = anchorlvm(&["fit", "--config", "t1/fit_config.json", "--events", "quiet.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("not value-sensitive"));
}

#[test]
fn scoring_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    assert!(anchorlvm(&["fit", "--config", "t1/fit_config.json"], dir.path()).status.success());

    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = anchorlvm(&["score", "--model", "t1/model.json", "--events", "empty.jsonl"], dir.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    fs::write(
        dir.path().join("mixed.jsonl"),
        "{\"id\":\"a\",\"behaviors\":{\"B\":1}}\n{\"id\":\"b\",\"behaviors\":{\"Nope\":1}}\n{\"id\":\"c\",\"behaviors\":{\"A\":0,\"B\":0}}\n",
    )
    .unwrap();
    let out = anchorlvm(&["score", "--model", "t1/model.json", "--events", "mixed.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let scores = lines(&out);
    assert_eq!(scores.len(), 3);
    assert!((scores[0]["raw"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!(scores[1]["error"].as_str().unwrap().contains("Nope"));
    assert!((scores[2]["raw"].as_f64().unwrap() - 0.10 / 0.34).abs() < 1e-12);
}

#[test]
fn report_probes() {
    let dir = tempfile::tempdir().unwrap();
    synth_t1(dir.path());
    assert!(anchorlvm(&["fit", "--config", "t1/fit_config.json"], dir.path()).status.success());
    fs::write(dir.path().join("probes.json"), r#"{"probes": ["P(V=1|A=1) < P(V=1|B=1)"]}"#).unwrap();
    let out = anchorlvm(&["report", "--model", "t1/model.json", "--probes", "probes.json", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["probes"][0]["status"], "pass");
    assert_eq!(report["probes"][0]["left"]["raw"], 0.0);

    fs::write(dir.path().join("bad.json"), r#"{"probes": ["P(V=1|Nope=1) > P(V=1|B=1)"]}"#).unwrap();
    let out = anchorlvm(&["report", "--model", "t1/model.json", "--probes", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Nope"));
}

#[test]
fn sampled_loop_matches_the_answer_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = anchorlvm(
        &["synth", "--structure", "twitter-shaped", "--seed", "1", "--behaviors", "3", "--events", "1000000", "--out-dir", "tw"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let gt = GroundTruthModel::parse(&fs::read_to_string(dir.path().join("tw/ground_truth.json")).unwrap()).unwrap();
    let events = anchorlvm::ingest::load_events(&dir.path().join("tw/events.jsonl"), gt.spec(), MissingBehaviors::Reject).unwrap();
    let table = tabulate_joint(events.map(Result::unwrap), gt.spec(), 0.0).unwrap();
    let exact = exact_observable_distribution(&gt).unwrap();
    let gap = table.probs().iter().zip(exact.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 0.005, "{gap}");

    let out = anchorlvm(&["fit", "--config", "tw/fit_config.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let out = anchorlvm(&["score", "--model", "tw/model.json", "--events", "tw/events.jsonl"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let key = fs::read_to_string(dir.path().join("tw/answer_key.jsonl")).unwrap();
    let mut worst = 0.0f64;
    for (k, s) in key.lines().zip(String::from_utf8_lossy(&out.stdout).lines()) {
        let k: Value = serde_json::from_str(k).unwrap();
        let s: Value = serde_json::from_str(s).unwrap();
        if s["evidence_probability"].as_f64().unwrap() >= 0.01 {
            worst = worst.max((k["posterior"].as_f64().unwrap() - s["raw"].as_f64().unwrap()).abs());
        }
    }
    assert!(worst <= 0.02, "{worst}");
}

#[test]
fn oracle_check_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = anchorlvm(&["oracle-check", "--seeds", "10"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("10/10"));
}
