mod common;

use std::path::Path;
use std::process::{Command, Output};

fn lego(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lego")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn compress_decompress_eval_stats() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::fixture("mnist_cnn.lgtw");
    let data = common::fixture("mnist_1k.lgtd");
    let lgnc = dir.path().join("m.lgnc");
    let dense = dir.path().join("m.lgtw");

    let report = json(&lego(&["compress", path(&model), path(&lgnc), "--k", "32", "--b", "4"]));
    assert_eq!(report["theoretical_cr"], 102.4);
    assert_eq!(report["bits_per_index"], 5);
    assert!(report["timings"]["total_s"].is_number());

    let stats = json(&lego(&["stats", path(&lgnc)]));
    assert_eq!(stats["k"], 32);

    let out = lego(&["decompress", path(&lgnc), path(&dense)]);
    assert!(out.status.success());
    let a = json(&lego(&["eval", path(&dense), path(&data)]));
    let b = json(&lego(&["eval", path(&lgnc), path(&data)]));
    assert_eq!(a, b);
    assert_eq!(a["samples"], 1000);

    let base = json(&lego(&["eval", path(&model), path(&data)]));
    assert_eq!(base["top1_accuracy"], 97.2);
}

#[test]
fn compress_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::fixture("mnist_cnn.lgtw");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = lego(&["compress", path(&model), path(&out), "--k", "8", "--seed", "5", "--omit-timings"]);
        assert!(o.status.success());
        (o.stdout, std::fs::read(out).unwrap())
    };
    assert_eq!(run("a.lgnc"), run("b.lgnc"));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let model = common::fixture("mnist_cnn.lgtw");
    let data = common::fixture("mnist_1k.lgtd");
    let out = lego(&["sweep", path(&model), "--dataset", path(&data), "--k-list", "2,4", "--csv", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,b,bits,theoretical_cr,metric,inertia,seconds"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn search_modes() {
    let model = common::fixture("mnist_cnn.lgtw");
    let data = common::fixture("mnist_1k.lgtd");
    let a = json(&lego(&["search", path(&model), "--dataset", path(&data), "--mode", "a", "--k-list", "4,8"]));
    assert_eq!(a["strategy"], "accuracy");
    assert_eq!(a["reports"].as_array().unwrap().len(), 2);
    let c = json(&lego(&["search", path(&model), "--mode", "c", "--epsilon", "1000", "--k-list", "4,8"]));
    assert_eq!(c["best_k"], 4);
    assert_eq!(c["status"], "satisfied");
    assert!(!lego(&["search", path(&model), "--mode", "z"]).status.success());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::fixture("mnist_cnn.lgtw");
    let out = dir.path().join("x.lgnc");

    let bad_k = lego(&["compress", path(&model), path(&out), "--k", "0"]);
    assert_eq!(bad_k.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_k.stderr).contains('K'));

    let missing = lego(&["compress", path(&dir.path().join("nope.lgtw")), path(&out), "--k", "4"]);
    assert_eq!(missing.status.code(), Some(3));

    let bogus = dir.path().join("bogus.lgnc");
    std::fs::write(&bogus, b"not a container").unwrap();
    assert_eq!(lego(&["stats", path(&bogus)]).status.code(), Some(2));
    assert_eq!(lego(&["frobnicate"]).status.code(), Some(2));
}
