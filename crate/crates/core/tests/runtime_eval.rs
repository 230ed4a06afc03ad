//! Runtime and evaluation behaviour with a real (randomly initialised)
//! encoder.

use qbye_core::audio::{write_wav, AudioClip};
use qbye_core::eval::{negative_hours, run_eval, score_set, load_eval_set, Polarity, QueryUtterance};
use qbye_core::features::FrontendConfig;
use qbye_core::mixer::{MixerConfig, MixerParams};
use qbye_core::rng::seeded;
use qbye_core::runtime::{embed_utterance, enroll, EnrollmentProfile, Model, StreamDetector};
use qbye_core::training::synth::utterance;
use qbye_core::training::Checkpoint;
use qbye_core::Error;

fn model() -> Model {
    let mixer = MixerConfig { h: 16, g: 16, n_blocks: 2, ..Default::default() };
    let ck = Checkpoint {
        params: MixerParams::init(&mixer, &mut seeded(1, 1)).unwrap(),
        mixer,
        frontend: FrontendConfig::default(),
        labels: vec![],
        step: 0,
    };
    Model::from_checkpoint(&ck).unwrap()
}

fn profile(model: &Model, class: usize) -> EnrollmentProfile {
    let clips: Vec<_> = (0..3).map(|i| utterance(0, class, i)).collect();
    enroll(&format!("c{class}"), &clips, model).unwrap()
}

#[test]
fn stream_cadence_after_one_second() {
    let model = model();
    let mut s = StreamDetector::new(&model, profile(&model, 1), 0.5).unwrap();
    let audio = utterance(0, 2, 0).samples;
    assert!(s.push(&audio[..15999]).unwrap().is_empty());
    let first = s.push(&audio[15999..]).unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!(first[0].end_ms, 1000);
    assert!(first[0].warm);
    assert!(s.push(&vec![0.01; 1599]).unwrap().is_empty());
    let second = s.push(&[0.01]).unwrap();
    assert_eq!(second.len(), 1);
    assert_eq!(second[0].end_ms, 1100);
}

#[test]
fn constant_input_gives_constant_scores() {
    let model = model();
    let mut s = StreamDetector::new(&model, profile(&model, 3), 0.5).unwrap();
    let events = s.push(&vec![0.0; 16000 * 3]).unwrap();
    assert_eq!(events.len(), 21);
    let last = events.last().unwrap().result.score;
    assert!(events[5..].iter().all(|e| e.result.score == last));
}

#[test]
fn stream_rejects_foreign_profiles() {
    let model = model();
    let mut p = profile(&model, 1);
    p.fingerprint = "deadbeefdeadbeef".into();
    assert!(matches!(StreamDetector::new(&model, p, 0.5), Err(Error::FingerprintMismatch { .. })));
}

#[test]
fn score_set_cardinality_and_hours() {
    let model = model();
    let profiles: Vec<_> = (0..3).map(|c| profile(&model, c)).collect();
    let negs: Vec<QueryUtterance> = (0..2)
        .map(|i| QueryUtterance { id: format!("n{i}"), clip: utterance(1, 7 + i, 0), profile: None })
        .collect();
    let rows = score_set(&profiles, &negs, &model, Polarity::Negative).unwrap();
    assert_eq!(rows.len(), 6);
    assert!((negative_hours(&rows) - 6.0 / 3600.0).abs() < 1e-15);
    assert!(rows.iter().all(|r| (0.0..=2.0).contains(&r.score)));

    assert!(score_set(&profiles, &[], &model, Polarity::Negative).unwrap().is_empty());

    let own = QueryUtterance { id: "p".into(), clip: utterance(0, 1, 2), profile: Some(1) };
    let rows = score_set(&profiles, &[own], &model, Polarity::Positive).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].score < 1e-9, "enrollment clip scores {}", rows[0].score);
}

#[test]
fn eval_set_end_to_end() {
    let model = model();
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    let mut add = |name: &str, clip: &AudioClip, speaker: &str, kw: Option<&str>, role: &str| {
        write_wav(dir.path().join(name), clip).unwrap();
        lines.push(serde_json::json!({"audio_path": name, "speaker": speaker, "keyword": kw, "role": role}).to_string());
    };
    for i in 0..3 {
        add(&format!("e{i}.wav"), &utterance(0, 4, i), "s1", Some("four"), "enroll");
    }
    add("q0.wav", &utterance(0, 4, 0), "s1", Some("four"), "query");
    add("q1.wav", &utterance(0, 4, 5), "s1", Some("four"), "query");
    add("n0.wav", &utterance(0, 9, 0), "s2", None, "negative");
    add("n1.wav", &utterance(0, 11, 0), "s2", None, "negative");
    std::fs::write(dir.path().join("eval.jsonl"), lines.join("\n")).unwrap();

    let set = load_eval_set(dir.path().join("eval.jsonl")).unwrap();
    let (report, profiles) = run_eval(&set, &model, 0.3).unwrap();
    assert_eq!(profiles.len(), 1);
    assert_eq!((report.n_pos, report.n_neg), (2, 2));
    assert!((report.negative_hours - 2.0 / 3600.0).abs() < 1e-15);
    // an exact enrollment copy is always accepted below the lowest negative
    assert!(report.frr_at_target <= 50.0);
    let q = embed_utterance(&utterance(0, 4, 0), &model).unwrap();
    assert_eq!(q.len(), 1);
}
