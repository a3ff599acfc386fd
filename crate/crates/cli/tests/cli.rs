use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hann_core::compression::codec;
use hann_core::hac::fit_table_erm;
use hann_core::rng::{stream, Stream};
use hann_core::{Arrangement, HacClassifier, LabeledSample};
use rand::Rng;

fn hann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hann")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Labels are a function of the sign pattern, so the sample is realizable.
fn fixture(dir: &Path) -> (PathBuf, PathBuf, Vec<LabeledSample>, HacClassifier) {
    let arr = Arrangement::from_hyperplanes(2, &[(vec![1.0, 0.3], -0.1), (vec![-0.4, 1.0], 0.2)]).unwrap();
    let mut rng = stream(9, Stream::Data, 0);
    let samples: Vec<LabeledSample> = (0..60)
        .map(|_| {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = arr.sign_vector(&x).unwrap();
            LabeledSample::new(x, if s.get(0) == s.get(1) { 1 } else { -1 })
        })
        .collect();
    let table = fit_table_erm(&arr, &samples).unwrap();
    let clf = HacClassifier::new(arr, table, 2).unwrap();
    let data = dir.join("data.json");
    let classifier = dir.join("classifier.json");
    fs::write(&data, serde_json::to_string(&samples).unwrap()).unwrap();
    fs::write(&classifier, serde_json::to_string(&clf).unwrap()).unwrap();
    (data, classifier, samples, clf)
}

#[test]
fn vc_bound_values_and_usage_errors() {
    let o = hann(&["vc-bound", "2", "2", "3"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["vc_upper_bound"], 344);
    assert_eq!(v["scheme_size"]["total"], 43);
    let o = hann(&["vc-bound", "1", "1", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["vc_upper_bound"], 48);
    assert_eq!(code(&hann(&["vc-bound", "2", "3", "2"])), 2);
    assert_eq!(code(&hann(&["vc-bound", "2", "2"])), 2);
    assert_eq!(code(&hann(&["vc-bound", "2", "2", "3", "--jobs", "0"])), 2);
}

#[test]
fn compression_round_trip_and_negative_controls() {
    let dir = tempfile::tempdir().unwrap();
    let (data, classifier, samples, _) = fixture(dir.path());
    let out = dir.path().join("run");
    let o = hann(&["compress", "--data", p(&data), "--classifier", p(&classifier), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bin = out.join("compressed.bin");
    for f in ["compressed.bin", "compressed.json", "report.json", "resolved_config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    assert_eq!(code(&hann(&["verify", "--compressed", p(&bin), "--data", p(&data)])), 0);
    let json = out.join("compressed.json");
    assert_eq!(code(&hann(&["verify", "--compressed", p(&json), "--data", p(&data)])), 0);

    let rec_dir = dir.path().join("rec");
    assert_eq!(code(&hann(&["reconstruct", "--compressed", p(&bin), "--out", p(&rec_dir)])), 0);
    let rec: HacClassifier = serde_json::from_str(&fs::read_to_string(rec_dir.join("classifier.json")).unwrap()).unwrap();
    assert!(samples.iter().all(|s| rec.predict(&s.x).unwrap() == s.y));

    // Flipping the first side sign asks for the stored point on the wrong
    // side of its hyperplane.
    let bytes = fs::read(&bin).unwrap();
    let comp = codec::from_bytes(&bytes).unwrap();
    let mut flipped = bytes.clone();
    flipped[codec::side_offset(&comp)] ^= 0x80;
    let flipped_path = dir.path().join("flipped.bin");
    fs::write(&flipped_path, &flipped).unwrap();
    assert_eq!(code(&hann(&["verify", "--compressed", p(&flipped_path), "--data", p(&data)])), 1);

    let truncated = dir.path().join("truncated.bin");
    fs::write(&truncated, &bytes[..bytes.len() - 5]).unwrap();
    assert_eq!(code(&hann(&["verify", "--compressed", p(&truncated), "--data", p(&data)])), 2);
    assert_eq!(code(&hann(&["reconstruct", "--compressed", p(&truncated), "--out", p(&rec_dir)])), 2);

    // Relabelling one sample breaks realizability of the input itself.
    let mut bad = samples.clone();
    bad[0].y = -bad[0].y;
    let bad_path = dir.path().join("bad.json");
    fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(code(&hann(&["verify", "--compressed", p(&bin), "--data", p(&bad_path)])), 1);
    let o = hann(&["compress", "--data", p(&bad_path), "--classifier", p(&classifier), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn cells_of_three_generic_lines() {
    let dir = tempfile::tempdir().unwrap();
    let arr = Arrangement::from_hyperplanes(2, &[(vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0), (vec![1.0, 1.0], -1.0)])
        .unwrap();
    let path = dir.path().join("arr.json");
    fs::write(&path, serde_json::to_string(&arr).unwrap()).unwrap();
    let o = hann(&["cells", "--arrangement", p(&path)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"], 7);
    assert_eq!(v["max_cells"], 7);
    assert_eq!(code(&hann(&["cells"])), 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&hann(&["moons", "--config", "/nonexistent/moons.json", "--out", p(&out)])), 2);
    let cfg = dir.path().join("c.json");
    for body in [r#"{"runs": 1}"#, r#"{"schema_version": 1, "rnus": 1}"#, r#"{"schema_version": 1, "command": "rate"}"#] {
        fs::write(&cfg, body).unwrap();
        assert_eq!(code(&hann(&["moons", "--config", p(&cfg), "--out", p(&out)])), 2, "{body}");
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn rate_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rate.json");
    fs::write(&cfg, r#"{"schema_version": 1, "n_grid": [64, 256, 1024], "trials": 3, "mc_n": 2000}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = hann(&["rate", "--config", p(&cfg), "--seed", "5", "--out", p(out), "--jobs", jobs, "--deterministic"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = files(&a);
    assert_eq!(fa.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(), ["rate.csv", "rate.svg", "report.json", "resolved_config.json"]);
    assert_eq!(fa, files(&b));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert!(report["slope"].is_number());
    assert_eq!(report["config"]["seed"], 5);
    assert!(!String::from_utf8(fs::read(a.join("rate.svg")).unwrap()).unwrap().contains("<metadata>"));

    // The echo is itself a valid config and reproduces the run.
    let c = dir.path().join("c");
    let o = hann(&["rate", "--config", p(&a.join("resolved_config.json")), "--out", p(&c), "--format", "json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
    assert!(!c.join("rate.csv").exists());
}

#[test]
fn small_moons_train_and_bench_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("moons.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "n_train": 60, "n_valid": 60, "runs": 1, "k": 4, "grid_resolution": 40, "train": {"epochs": 30}}"#,
    )
    .unwrap();
    let out = dir.path().join("moons");
    let o = hann(&["moons", "--config", p(&cfg), "--out", p(&out), "--deterministic"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "runs.csv", "summary.csv", "cells.csv", "decision_grid.svg", "audit.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let audit: serde_json::Value = serde_json::from_slice(&fs::read(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["violations"].as_array().unwrap().len(), 0);

    let cfg = dir.path().join("train.json");
    fs::write(&cfg, r#"{"schema_version": 1, "k": 4, "dataset": {"kind": "moons", "n": 120, "noise": 0.1}, "train": {"epochs": 20}}"#)
        .unwrap();
    let out = dir.path().join("train");
    let o = hann(&["train", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let net = hann_core::qnet::checkpoint::load(&out.join("model.json")).unwrap();
    assert_eq!(net.input_dim(), 2);
    assert!(out.join("epochs.csv").exists() && out.join("metrics.json").exists());

    let cfg = dir.path().join("bench.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "datasets": [{"kind": "bundled", "name": "iris"}, {"kind": "bundled", "name": "missing"}],
            "dropout_grid": [0.1, 0.5], "train": {"epochs": 20}}"#,
    )
    .unwrap();
    let out = dir.path().join("bench");
    // A missing bundled dataset is an input error caught before any training.
    assert_eq!(code(&hann(&["bench", "--config", p(&cfg), "--out", p(&out)])), 2);
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "datasets": [{"kind": "bundled", "name": "iris"}], "dropout_grid": [0.1, 0.5], "train": {"epochs": 20}}"#,
    )
    .unwrap();
    let o = hann(&["bench", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("iris,150,4,4,3,false,"));
}
