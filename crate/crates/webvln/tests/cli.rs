//! End-to-end run of the command-line pipeline on the fixture shop.

use std::path::Path;
use std::process::Command;

use webvln::core::sim::{EpisodeRecord, Trajectory};
use webvln::formats::{read_json, read_jsonl};

fn webvln(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_webvln"))
        .current_dir(dir)
        .args(["--config", "webvln.toml"])
        .args(args)
        .env_remove("WEBVLN_CONFIG")
        .env_remove("WEBVLN_SITE")
        .env_remove("WEBVLN_DATASET")
        .env_remove("LLM_ENDPOINT")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "webvln {args:?} failed:\n{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn fixture_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("webvln.toml"),
        "site = \"shop\"\ndataset = \"out/dataset.jsonl\"\nout_dir = \"out\"\n\n[llm]\nmock_dir = \"shop/mock\"\n\n[model]\nsize = \"tiny\"\n",
    )
    .unwrap();

    assert!(webvln(d, &["make-fixture", "--out", "shop"]).contains("30 pages"));
    assert!(webvln(d, &["ingest", "--out", "out/graph.json"]).starts_with("30 pages"));
    webvln(d, &["pathgen", "--n", "100", "--out", "out/paths.jsonl"]);
    let paths: Vec<serde_json::Value> = read_jsonl(&d.join("out/paths.jsonl")).unwrap();
    assert_eq!(paths.len(), 24);

    webvln(d, &["qagen", "--paths", "out/paths.jsonl", "--out", "out/dataset.jsonl", "--prompts-out", "out/prompts.json"]);
    let records: Vec<EpisodeRecord> = read_jsonl(&d.join("out/dataset.jsonl")).unwrap();
    assert_eq!(records.len(), 72);
    assert!(records.iter().all(|r| r.split.is_some()));

    let oracle = webvln(d, &["eval", "--agent", "oracle", "--split", "test"]);
    assert!(oracle.contains("0 failures"), "{oracle}");
    let report: serde_json::Value = read_json(&d.join("out/runs/oracle-test/report.json")).unwrap();
    assert_eq!(report["sr"], 1.0);
    let trajs: Vec<Trajectory> = read_jsonl(&d.join("out/runs/oracle-test/trajectories.jsonl")).unwrap();
    assert_eq!(trajs.len(), report["n"].as_u64().unwrap() as usize);

    let train = webvln(d, &["train", "--out", "out/model.ckpt", "--iterations", "3"]);
    assert!(train.contains("training split"), "{train}");
    webvln(d, &["eval", "--agent", "learned", "--split", "val", "--checkpoint", "out/model.ckpt", "--run-id", "learned"]);
    assert!(d.join("out/runs/learned/report.json").is_file());

    webvln(d, &["eval", "--agent", "greedy", "--split", "val"]);
    webvln(d, &["eval", "--agent", "random", "--split", "val", "--seed", "1"]);

    let grad = webvln(d, &["gradcheck", "--samples", "50"]);
    assert!(grad.contains("max relative error"), "{grad}");
}
