use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stillact::eval::ThresholdSet;
use stillact::io::{load_annotations, load_model};

fn stillact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stillact")).args(args).env("STILLACT_LOG", "error").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, per_class: &str) -> PathBuf {
    let out = dir.join("synth");
    let o = stillact(&[
        "synth-gen",
        "--out",
        s(&out),
        "--images-per-class",
        per_class,
        "--seed",
        "2",
        "--miss-prob",
        "0.2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("annotations.jsonl")
}

const QUICK: [&str; 6] = ["--epochs-pretrain", "2", "--epochs-finetune", "3", "--replicas", "1"];

#[test]
fn usage_errors_exit_with_one() {
    let o = stillact(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(stillact(&["train", "--out", "x"]).status.code(), Some(1));
    assert_eq!(stillact(&[]).status.code(), Some(1));
    assert_eq!(stillact(&["--help"]).status.code(), Some(0));
    assert_eq!(stillact(&["train", "--propagate", "bogus", "--data", "d", "--out", "o"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two_and_name_the_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = stillact(&["encode", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.jsonl"));

    let bad = dir.path().join("bad.jsonl");
    let good = r#"{"image_id":"a","width":10,"height":10,"pose_mode":"full","label":null,"detections":[]}"#;
    let wrong = r#"{"image_id":"b","width":10,"height":10,"pose_mode":"full","label":"dancing","detections":[]}"#;
    std::fs::write(&bad, format!("{good}\n{wrong}\n")).unwrap();
    let o = stillact(&["encode", "--data", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("bad.jsonl") && msg.contains("line 2") && msg.contains("dancing"), "{msg}");

    let corrupt = dir.path().join("model.json");
    std::fs::write(&corrupt, "{\"format_version\": 1}").unwrap();
    let data = synth(dir.path(), "1");
    let o = stillact(&["evaluate", "--data", s(&data), "--model", s(&corrupt), "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.json"));
}

#[test]
fn divergent_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "2");
    let out = dir.path().join("t");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&out), "--lr-finetune", "1e308"];
    args.extend_from_slice(&QUICK);
    let o = stillact(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

fn listing(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let name = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            out.extend(listing(&path).into_iter().map(|n| format!("{name}/{n}")));
        } else {
            out.push(name);
        }
    }
    out.sort();
    out
}

#[test]
fn every_subcommand_writes_reloadable_artifacts_under_out_only() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = synth(root, "6");
    let run = |args: Vec<&str>| {
        let o = stillact(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    let p = |n: &str| root.join(n);
    let (enc, aug, pre, fin, tr, pred, ev, sel) =
        (p("enc"), p("aug"), p("pre"), p("fin"), p("tr"), p("pred"), p("ev"), p("sel"));

    run(vec!["encode", "--data", s(&data), "--out", s(&enc)]);
    run(vec!["augment", "--data", s(&data), "--out", s(&aug), "--replicas", "2", "--seed", "3"]);
    let mut a = vec!["pretrain", "--data", s(&data), "--out", s(&pre)];
    a.extend_from_slice(&QUICK);
    run(a);
    let pre_model = pre.join("model.json");
    let mut a = vec!["finetune", "--data", s(&data), "--model", s(&pre_model), "--out", s(&fin)];
    a.extend_from_slice(&QUICK);
    run(a);
    let mut a = vec!["train", "--data", s(&data), "--out", s(&tr), "--propagate", "sample"];
    a.extend_from_slice(&QUICK);
    run(a);
    let model = tr.join("model.json");
    run(vec!["predict", "--data", s(&data), "--model", s(&model), "--out", s(&pred)]);
    let mut a = vec!["select-thresholds", "--data", s(&data), "--out", s(&sel), "--folds", "2"];
    a.extend_from_slice(&QUICK);
    run(a);
    let th = sel.join("thresholds.json");
    run(vec!["evaluate", "--data", s(&data), "--model", s(&model), "--out", s(&ev), "--thresholds", s(&th)]);

    assert_eq!(
        listing(root),
        [
            "aug/augmented.jsonl",
            "aug/config.json",
            "enc/config.json",
            "enc/features.jsonl",
            "ev/config.json",
            "ev/report.json",
            "ev/report.txt",
            "fin/config.json",
            "fin/metrics.log",
            "fin/model.json",
            "pre/config.json",
            "pre/metrics.log",
            "pre/model.json",
            "pred/config.json",
            "pred/predictions.jsonl",
            "sel/config.json",
            "sel/selection.json",
            "sel/thresholds.json",
            "synth/annotations.jsonl",
            "synth/config.json",
            "tr/config.json",
            "tr/metrics.log",
            "tr/model.json",
        ]
    );

    assert_eq!(load_annotations(&data).unwrap().len(), 42);
    assert_eq!(load_annotations(&aug.join("augmented.jsonl")).unwrap().len(), 42 * 4);
    let pre_m = load_model::<f64>(&pre_model).unwrap();
    assert!(pre_m.head.weights.as_slice().iter().all(|&w| w == 0.0));
    let fin_m = load_model::<f64>(&fin.join("model.json")).unwrap();
    assert_eq!(fin_m.layer1.visible_bias, pre_m.layer1.visible_bias);
    assert!(fin_m.metadata.finetune.is_some() && fin_m.metadata.pretrain.is_some());
    load_model::<f64>(&model).unwrap();
    let _: ThresholdSet = serde_json::from_str(&std::fs::read_to_string(&th).unwrap()).unwrap();

    let features = std::fs::read_to_string(enc.join("features.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(features.lines().next().unwrap()).unwrap();
    assert_eq!(first["features"].as_array().unwrap().len(), 90);
    let predictions = std::fs::read_to_string(pred.join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 42);
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tr.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "train");
    assert_eq!(config["args"]["hyper"]["propagate"], "sample");
    let metrics = std::fs::read_to_string(tr.join("metrics.log")).unwrap();
    assert_eq!(metrics.lines().filter(|l| l.starts_with("finetune ")).count(), 3);
}

#[test]
fn defaults_follow_the_reference_recipe() {
    let o = stillact(&["train", "--help"]);
    let help = String::from_utf8_lossy(&o.stdout).into_owned();
    let expected = [
        ("--epochs-pretrain", "100"),
        ("--lr-pretrain", "0.01"),
        ("--epochs-finetune", "1000"),
        ("--lr-finetune", "0.1"),
        ("--batch", "20"),
        ("--jitter", "10"),
        ("--replicas", "10"),
        ("--propagate", "mean"),
    ];
    for (flag, default) in expected {
        let at = help.find(&format!("{flag} <")).unwrap_or_else(|| panic!("{flag} missing"));
        let rest = &help[at..];
        let value = rest[rest.find("[default: ").unwrap() + 10..].split(']').next().unwrap();
        assert_eq!(value, default, "{flag}");
    }
}
