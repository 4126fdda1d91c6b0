use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_misdetect");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn misdetect(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config() -> String {
    fixture("small_run.toml").to_str().unwrap().to_string()
}

#[test]
fn desk_generator_matches_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("posts.jsonl");
    ok(&misdetect(&["gen-desk", "--config", &small_config(), "--output", out.to_str().unwrap()], dir.path()));
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture("desk_small_seed7.jsonl")).unwrap());

    // default corpus, seed 42
    ok(&misdetect(&["gen-desk", "--output", "default.jsonl"], dir.path()));
    let bytes = fs::read(dir.path().join("default.jsonl")).unwrap();
    assert_eq!(
        misdetect::runtime::sha256_hex(&bytes),
        "2f051714915e50ecd7bdb581f35c4e38ea103b405bb30eddf3d7b962ff0c7896"
    );
}

#[test]
fn prepare_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config();
    for dir in [&a, &b] {
        ok(&misdetect(&["prepare", "--config", &cfg, "--out-dir", "out"], dir.path()));
    }
    for file in ["splits.txt", "records.jsonl", "vocab.txt", "manifest_prepare.json"] {
        let x = fs::read(a.path().join("out").join(file)).unwrap();
        let y = fs::read(b.path().join("out").join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    ok(&misdetect(&["prepare", "--config", &cfg, "--out-dir", "reseeded", "--seed", "8"], a.path()));
    assert_ne!(
        fs::read(a.path().join("out/splits.txt")).unwrap(),
        fs::read(a.path().join("reseeded/splits.txt")).unwrap()
    );
    let manifest: Value = serde_json::from_slice(&fs::read(a.path().join("reseeded/manifest_prepare.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 8);
    let snapshot = manifest["config"].as_str().unwrap();
    assert!(snapshot.contains("[split]\nseed = 8"), "{snapshot}");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[model]\nd_modle = 64\n", "d_modle"),
        ("[plan]\nlr = -1.0\n", "plan.lr"),
        ("tau = 2.0\n", "tau"),
        ("[split]\nstage2_mix = { PHEME = -0.5 }\n", "stage2_mix"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.toml"));
        fs::write(&path, text).unwrap();
        let out = misdetect(&["prepare", "--config", path.to_str().unwrap(), "--out-dir", "out"], dir.path());
        assert_eq!(out.status.code(), Some(3), "{text}: {}", stderr(&out));
        assert!(stderr(&out).contains(field), "{text}: {}", stderr(&out));
    }
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = misdetect(&["classify", "--bundle", "nowhere", "--input", "posts.txt"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let out = misdetect(&["prepare", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    fs::write(dir.path().join("corpora.toml"), "corpora = [\"gone.jsonl\"]\n").unwrap();
    let out = misdetect(&["prepare", "--config", "corpora.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("gone.jsonl"));
    let out = misdetect(&["train", "--out-dir", "empty"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(misdetect::cli::dispatch(["misdetect", "frobnicate"]), 2);
    assert_eq!(misdetect::cli::dispatch(["misdetect", "eval", "--split", "Stage9"]), 2);
}

#[test]
fn divergence_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("small_run.toml")).unwrap().replace("lr = 0.003", "lr = 1e300");
    fs::write(dir.path().join("diverge.toml"), text).unwrap();
    ok(&misdetect(&["prepare", "--config", "diverge.toml"], dir.path()));
    let out = misdetect(&["train", "--config", "diverge.toml"], dir.path());
    assert_eq!(out.status.code(), Some(6), "{}", stderr(&out));
    assert!(dir.path().join("run/history.json").exists());
}

fn assert_close(a: &Value, b: &Value, what: &str) {
    let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
    assert!((x - y).abs() <= 1e-6, "{what}: {x} vs golden {y}");
}

#[test]
fn small_run_matches_golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&misdetect(&["run", "--config", &small_config(), "--out-dir", "out"], dir.path()));
    let out = dir.path().join("out");

    let metrics: Value = serde_json::from_slice(&fs::read(out.join("metrics_test_quant.json")).unwrap()).unwrap();
    let golden: Value = serde_json::from_slice(&fs::read(fixture("golden_metrics_test_quant.json")).unwrap()).unwrap();
    assert_eq!(metrics["confusion"], golden["confusion"]);
    assert_eq!(metrics["tau"], golden["tau"]);
    for key in ["accuracy", "precision", "recall", "f1", "macro_f1", "auroc"] {
        assert_close(&metrics[key], &golden[key], key);
    }

    let verdicts = misdetect(
        &["classify", "--bundle", "out/bundle", "--input", fixture("feed.jsonl").to_str().unwrap()],
        dir.path(),
    );
    ok(&verdicts);
    let got: Vec<Value> = String::from_utf8(verdicts.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let want: Vec<Value> = fs::read_to_string(fixture("golden_verdicts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g["post_id"], w["post_id"]);
        assert_eq!(g["status"], w["status"], "{}", w["post_id"]);
        match w.get("p1") {
            Some(p) => assert_close(&g["p1"], p, w["post_id"].as_str().unwrap()),
            None => assert!(g.get("p1").is_none()),
        }
    }

    for m in ["prepare", "train", "quantize", "eval_test_quant", "export_bundle"] {
        let manifest: Value = serde_json::from_slice(&fs::read(out.join(format!("manifest_{m}.json"))).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 7, "{m}");
        assert!(!manifest["artifacts"].as_object().unwrap().is_empty(), "{m}");
    }

    // float evaluation and an explicit threshold write their own report
    ok(&misdetect(&["eval", "--out-dir", "out", "--config", &small_config(), "--split", "Dev", "--float", "--tau", "0.5"], dir.path()));
    let dev: Value = serde_json::from_slice(&fs::read(out.join("metrics_dev_float.json")).unwrap()).unwrap();
    assert_eq!(dev["tau"], 0.5);
    assert_eq!(dev["model"], "float");

    let bench = misdetect(
        &["bench", "--bundle", "out/bundle", "--posts", "out/raw_posts.jsonl", "--warmup", "5", "--output", "bench.json"],
        dir.path(),
    );
    ok(&bench);
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("bench.json")).unwrap()).unwrap();
    let n = fs::read_to_string(out.join("raw_posts.jsonl")).unwrap().lines().count();
    assert_eq!(report["stats"]["count"].as_u64().unwrap() as usize, n - 5);
    assert!(report["stats"]["median"].as_f64().unwrap() <= 150.0);
}

#[test]
fn training_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config();
    for dir in [&a, &b] {
        ok(&misdetect(&["prepare", "--config", &cfg, "--out-dir", "out"], dir.path()));
        ok(&misdetect(&["train", "--config", &cfg, "--out-dir", "out"], dir.path()));
    }
    for file in ["model.mdck", "history.json", "calibration.json", "manifest_train.json"] {
        assert!(
            fs::read(a.path().join("out").join(file)).unwrap() == fs::read(b.path().join("out").join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn plain_text_feed_lines_get_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feed.txt");
    fs::write(&path, "first line of text here\n\n{\"id\": \"x\", \"text\": \"hello\"}\nthird\n").unwrap();
    let posts = misdetect::cli::read_feed(&path).unwrap();
    let ids: Vec<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();
    assert_eq!(ids, ["1", "x", "4"]);
    fs::write(&path, "{\"id\": \"x\"}\n").unwrap();
    assert_eq!(misdetect::cli::read_feed(&path).unwrap_err().exit_code(), 5);
}
