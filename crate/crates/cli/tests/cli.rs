use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qbye_core::audio::load_wav;
use qbye_core::runtime::{embed_utterance, EnrollmentProfile, Model};
use qbye_core::training::Checkpoint;

fn qbye(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbye")).args(args).output().expect("spawn qbye")
}

fn ok(args: &[&str]) -> String {
    let out = qbye(args);
    assert!(
        out.status.success(),
        "qbye {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    qbye(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn wavs(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(wavs(&p));
        } else if p.extension().is_some_and(|e| e == "wav") {
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Small dataset plus a two-epoch model trained on it.
fn trained(root: &Path, seed: &str) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    if !data.exists() {
        ok(&["gen-synthetic", "--classes", "3", "--per-class", "5", "--seed", "7", "--out-dir", s(&data)]);
    }
    let model_cfg = root.join("model.json");
    fs::write(&model_cfg, r#"{"h": 8, "g": 8, "n_blocks": 1}"#).unwrap();
    let out = root.join(format!("run{seed}"));
    ok(&[
        "train",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--model-config",
        s(&model_cfg),
        "--noise-dir",
        s(&data.join("noise")),
        "--epochs",
        "2",
        "--seed",
        seed,
        "--out",
        s(&out),
    ]);
    (data, out)
}

#[test]
fn info_reports_default_model_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.json");
    fs::write(&cfg, "{}").unwrap();
    assert_eq!(ok(&["info", "--config", s(&cfg)]).trim(), "params: 256200 (0.26M), macs: 20155392 (20.16M)");
    fs::write(&cfg, r#"{"n_blocks": 0}"#).unwrap();
    assert_eq!(ok(&["info", "--config", s(&cfg)]).trim(), "params: 0 (0.00M), macs: 0 (0.00M)");
}

#[test]
fn corrupt_checkpoint_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.qbem");
    fs::write(&ck, b"QBEMgarbage").unwrap();
    let out = qbye(&["info", "--checkpoint", s(&ck)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["info", "--bogus"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["info"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = qbye(&["train", "--manifest", s(&dir.path().join("missing.jsonl")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--help"));
}

#[test]
fn gen_synthetic_cardinality_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-synthetic", "--classes", "10", "--per-class", "20", "--seed", "3", "--out-dir", s(d)]);
    }
    let rows = fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 200);
    let keyword_wavs: Vec<_> = wavs(&a).into_iter().filter(|p| !p.starts_with(a.join("noise"))).collect();
    assert_eq!(keyword_wavs.len(), 200);
    for p in wavs(&a) {
        let twin = b.join(p.strip_prefix(&a).unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(twin).unwrap(), "{}", p.display());
    }
    assert_eq!(rows, fs::read_to_string(b.join("manifest.jsonl")).unwrap());

    assert_eq!(code(&["gen-synthetic", "--classes", "1", "--per-class", "4", "--out-dir", s(&dir.path().join("c"))]), 1);
}

#[test]
fn train_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (_, first) = trained(dir.path(), "5");
    let metrics = fs::read_to_string(first.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(first.join("model.qbem").is_file());

    let again = dir.path().join("again");
    let data = dir.path().join("data");
    ok(&[
        "--threads",
        "3",
        "train",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--model-config",
        s(&dir.path().join("model.json")),
        "--noise-dir",
        s(&data.join("noise")),
        "--epochs",
        "2",
        "--seed",
        "5",
        "--out",
        s(&again),
    ]);
    assert_eq!(metrics, fs::read_to_string(again.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(first.join("model.qbem")).unwrap(), fs::read(again.join("model.qbem")).unwrap());
}

#[test]
fn enroll_detect_and_fingerprint_guard() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained(dir.path(), "1");
    let ck = run.join("model.qbem");
    let clips: Vec<String> = (0..3).map(|i| s(&data.join(format!("word01/word01_{i:03}.wav"))).to_string()).collect();
    let profile = dir.path().join("profile.json");
    let mut args = vec!["enroll", "--checkpoint", s(&ck), "--keyword", "word01", "--out", s(&profile)];
    args.extend(clips.iter().map(String::as_str));
    ok(&args);
    let bytes = fs::read(&profile).unwrap();
    ok(&args);
    assert_eq!(bytes, fs::read(&profile).unwrap());
    assert_eq!(EnrollmentProfile::load(&profile).unwrap().enrollments.len(), 3);

    let hit = ok(&["detect", "--checkpoint", s(&ck), "--profile", s(&profile), "--audio", &clips[1], "--threshold", "0.5"]);
    assert_eq!(hit.trim(), "TRIGGERED score=0.000000");
    let miss = ok(&["detect", "--checkpoint", s(&ck), "--profile", s(&profile), "--audio", &clips[1], "--threshold", "0"]);
    assert!(miss.starts_with("NO score="), "{miss}");

    let (_, other) = trained(dir.path(), "2");
    let out = qbye(&["detect", "--checkpoint", s(&other.join("model.qbem")), "--profile", s(&profile), "--audio", &clips[0]]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn featurize_and_embed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained(dir.path(), "1");
    let wav = data.join("word02/word02_000.wav");
    let f1 = dir.path().join("f1.json");
    let f2 = dir.path().join("f2.json");
    ok(&["featurize", "--audio", s(&wav), "--out", s(&f1), "--seed", "4"]);
    ok(&["featurize", "--audio", s(&wav), "--out", s(&f2), "--seed", "4"]);
    assert_eq!(fs::read(&f1).unwrap(), fs::read(&f2).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&f1).unwrap()).unwrap();
    assert_eq!(doc["shape"], serde_json::json!([81, 81]));
    assert_eq!(doc["values"].as_array().unwrap().len(), 81);

    let e = dir.path().join("e.json");
    ok(&["embed", "--checkpoint", s(&run.join("model.qbem")), "--audio", s(&wav), "--out", s(&e)]);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&e).unwrap()).unwrap();
    assert_eq!(doc["dim"], 81);
    assert_eq!(doc["window_offsets_ms"], serde_json::json!([0]));
}

fn brute_distance(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb).max(1e-12)).clamp(0.0, 2.0)
}

#[test]
fn eval_matches_brute_force_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained(dir.path(), "1");
    let ck = run.join("model.qbem");
    let clip = |c: usize, i: usize| format!("word{c:02}/word{c:02}_{i:03}.wav");
    let mut rows = Vec::new();
    for i in 0..3 {
        rows.push(serde_json::json!({"audio_path": clip(0, i), "speaker": "s", "keyword": "w0", "role": "enroll"}));
    }
    let queries = [clip(0, 3), clip(0, 4)];
    let negatives = [clip(1, 0), clip(2, 0)];
    for q in &queries {
        rows.push(serde_json::json!({"audio_path": q, "speaker": "s", "keyword": "w0", "role": "query"}));
    }
    for n in &negatives {
        rows.push(serde_json::json!({"audio_path": n, "speaker": "t", "keyword": null, "role": "negative"}));
    }
    let set = data.join("eval.jsonl");
    fs::write(&set, rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n")).unwrap();

    let (roc, report) = (dir.path().join("roc.csv"), dir.path().join("report.json"));
    ok(&["eval", "--checkpoint", s(&ck), "--eval-set", s(&set), "--target-fa", "0.3", "--roc-out", s(&roc), "--report-out", s(&report)]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();

    // one-second synthetic clips give one embedding each, so matching is a single cosine distance
    let model = Model::from_checkpoint(&Checkpoint::load(&ck).unwrap()).unwrap();
    let embed = |rel: &str| embed_utterance(&load_wav(data.join(rel)).unwrap(), &model).unwrap().vectors.remove(0);
    let enrolled: Vec<_> = (0..3).map(|i| embed(&clip(0, i))).collect();
    let score = |rel: &str| {
        let q = embed(rel);
        enrolled.iter().map(|e| brute_distance(e, &q)).fold(f64::INFINITY, f64::min)
    };
    let pos: Vec<f64> = queries.iter().map(|q| score(q)).collect();
    let neg: Vec<f64> = negatives.iter().map(|n| score(n)).collect();
    let hours = 2.0 / 3600.0;
    // the largest threshold with zero false alarms: 0.3 fa/h allows none in 2 s
    let tau = neg.iter().cloned().fold(f64::INFINITY, f64::min);
    let fa = neg.iter().filter(|&&n| n < tau).count() as f64 / hours;
    assert_eq!(fa, 0.0);
    let frr = 100.0 * pos.iter().filter(|&&p| p >= tau).count() as f64 / pos.len() as f64;
    assert_eq!(report["frr_at_target"].as_f64().unwrap(), frr);
    assert_eq!(report["n_pos"], 2);
    assert_eq!(report["n_neg"], 2);
    assert!((report["threshold"].as_f64().unwrap() - tau).abs() < 1e-9);
    let csv = fs::read_to_string(&roc).unwrap();
    assert!(csv.starts_with("threshold,fa_per_hour,frr_percent\n"));
}
