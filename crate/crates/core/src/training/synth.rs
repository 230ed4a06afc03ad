//! Synthetic "tone word" dataset for desk-scale training and tests.
//!
//! Each class is a two-syllable harmonic word: a fixed pair of fundamentals
//! and spectral peaks per syllable, derived from the class index alone.
//! Utterances jitter amplitude, pitch, syllable length, onset and harmonic
//! phases, and sit on a faint noise floor.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use super::manifest::{ManifestRow, Split};
use crate::audio::{write_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream, Rng};

const GOLDEN: f64 = 0.618_033_988_749_895;

#[derive(Debug, Clone, Copy)]
struct Syllable {
    f0: f64,
    peak_hz: f64,
}

fn class_syllables(class: usize) -> [Syllable; 2] {
    let k = class as f64;
    let frac = |x: f64| x - x.floor();
    let f0 = 110.0 * 1.09f64.powf(k);
    [
        Syllable {
            f0,
            peak_hz: 400.0 + frac(k * GOLDEN) * 2600.0,
        },
        Syllable {
            f0: f0 * if class % 2 == 0 { 1.25 } else { 0.8 },
            peak_hz: 400.0 + frac(k * GOLDEN + 0.5) * 2600.0,
        },
    ]
}

fn render_syllable(out: &mut [f64], start: usize, len: usize, syl: Syllable, amp: f64, rng: &mut Rng) {
    let sr = SAMPLE_RATE as f64;
    let ramp = (0.02 * sr) as usize;
    let n_harm = ((7_600.0 / syl.f0) as usize).max(1);
    let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|j| {
            let f = syl.f0 * j as f64;
            let formant = (-((f - syl.peak_hz) / 350.0).powi(2)).exp();
            let weight = 0.25 / j as f64 + formant;
            (f, weight, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let norm: f64 = harmonics.iter().map(|h| h.1).sum();
    for i in 0..len {
        let idx = start + i;
        if idx >= out.len() {
            break;
        }
        let env = if i < ramp {
            0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
        } else if i + ramp > len {
            0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        let t = i as f64 / sr;
        let s: f64 = harmonics
            .iter()
            .map(|&(f, w, ph)| w * (2.0 * PI * f * t + ph).sin())
            .sum();
        out[idx] += amp * env * s / norm;
    }
}

/// One 1 s utterance of `class`.
pub fn tone_word(class: usize, rng: &mut Rng) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let mut out: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|_| rng.random_range(-0.002..0.002))
        .collect();
    let amp = rng.random_range(0.3..0.6);
    let pitch = rng.random_range(0.97..1.03);
    let syl_len = (rng.random_range(0.22..0.28) * sr) as usize;
    let gap = (rng.random_range(0.03..0.07) * sr) as usize;
    let onset = (rng.random_range(0.08..0.3) * sr) as usize;
    let [a, b] = class_syllables(class);
    let scale = |s: Syllable| Syllable { f0: s.f0 * pitch, ..s };
    render_syllable(&mut out, onset, syl_len, scale(a), amp, rng);
    render_syllable(&mut out, onset + syl_len + gap, syl_len, scale(b), amp, rng);
    AudioClip::new(out.into_iter().map(|v| v as f32).collect())
}

/// Stationary noise for augmentation. `kind` selects white, low-passed or
/// random-walk ("brown") noise.
pub fn noise_clip(kind: usize, seconds: f64, rng: &mut Rng) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let white: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shaped: Vec<f64> = match kind % 3 {
        0 => white,
        1 => {
            let mut y = 0.0;
            white.iter().map(|&x| {
                y = 0.9 * y + 0.1 * x;
                y
            }).collect()
        }
        _ => {
            let mut y = 0.0;
            white.iter().map(|&x| {
                y = 0.995 * y + 0.05 * x;
                y
            }).collect()
        }
    };
    let peak = shaped.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    AudioClip::new(shaped.into_iter().map(|v| (0.5 * v / peak) as f32).collect())
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Utterances per class assigned to the valid split (taken last).
    pub valid_per_class: usize,
    pub noise_files: usize,
    pub noise_seconds: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(classes: usize, per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            valid_per_class: per_class / 5,
            noise_files: 3,
            noise_seconds: 3.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub utterances: usize,
    pub classes: usize,
    pub noise_files: usize,
}

pub fn label_for(class: usize) -> String {
    format!("word{class:02}")
}

/// Utterance `index` of `class`, independent of every other utterance.
pub fn utterance(seed: u64, class: usize, index: usize) -> AudioClip {
    let id = (class as u64) << 20 | index as u64;
    tone_word(class, &mut seeded(seed, stream::SYNTH + (1 << 40) + id))
}

/// Writes `<out>/<label>/<label>_<i>.wav`, `<out>/noise/noise_<k>.wav` and
/// `<out>/manifest.jsonl`.
pub fn generate_dataset(out_dir: &Path, spec: &SynthSpec) -> Result<SynthSummary> {
    if spec.classes < 2 {
        return Err(Error::TooFewClasses(spec.classes));
    }
    if spec.per_class == 0 || spec.valid_per_class > spec.per_class {
        return Err(Error::InvalidConfig(format!(
            "per_class {} with {} valid",
            spec.per_class, spec.valid_per_class
        )));
    }
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(out_dir)?;
    let mut manifest = String::new();
    for class in 0..spec.classes {
        let label = label_for(class);
        mkdir(&out_dir.join(&label))?;
        for i in 0..spec.per_class {
            let rel = format!("{label}/{label}_{i:03}.wav");
            write_wav(out_dir.join(&rel), &utterance(spec.seed, class, i))?;
            let split = if i >= spec.per_class - spec.valid_per_class {
                Split::Valid
            } else {
                Split::Train
            };
            let row = ManifestRow {
                audio_path: rel,
                label: label.clone(),
                split,
            };
            manifest.push_str(&serde_json::to_string(&row).expect("serializable row"));
            manifest.push('\n');
        }
    }
    let noise_dir = out_dir.join("noise");
    mkdir(&noise_dir)?;
    for k in 0..spec.noise_files {
        let mut rng = seeded(spec.seed, stream::SYNTH + (2 << 40) + k as u64);
        write_wav(
            noise_dir.join(format!("noise_{k}.wav")),
            &noise_clip(k, spec.noise_seconds, &mut rng),
        )?;
    }
    let path = out_dir.join("manifest.jsonl");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(SynthSummary {
        utterances: spec.classes * spec.per_class,
        classes: spec.classes,
        noise_files: spec.noise_files,
    })
}
