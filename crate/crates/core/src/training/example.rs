//! Turning one manifest entry into a (features, class) training pair.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::manifest::ManifestEntry;
use crate::audio::{load_wav, mix_noise_at_snr, standardize_duration, AudioClip};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frontend};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Probability that an example gets background noise.
    pub noise_prob: f64,
    /// Inclusive SNR range in dB.
    pub snr_range_db: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_prob: 1.0,
            snr_range_db: [4.0, 12.0],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("snr range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::InvalidConfig(format!("noise_prob {}", self.noise_prob)));
        }
        Ok(())
    }
}

/// Background noise clips, in file-name order.
#[derive(Debug, Clone, Default)]
pub struct NoisePool {
    pub clips: Vec<AudioClip>,
}

impl NoisePool {
    /// Loads every `*.wav` directly inside `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::InvalidConfig(format!("no wav files in {}", dir.display())));
        }
        let clips = paths.iter().map(load_wav).collect::<Result<Vec<_>>>()?;
        Ok(Self { clips })
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Uniform draw from the inclusive SNR range.
pub fn draw_snr(range: [f64; 2], rng: &mut Rng) -> f64 {
    let [lo, hi] = range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Standardize to the frontend clip length, maybe add noise, featurize.
///
/// Random draws, in order: crop/pad offset, noise coin, noise file, SNR,
/// noise segment offset.
pub fn prepare_example(
    clip: &AudioClip,
    noise: &NoisePool,
    aug: &AugmentConfig,
    frontend: &Frontend,
    rng: &mut Rng,
) -> Result<FeatureMatrix> {
    let mut audio = standardize_duration(clip, frontend.config().clip_s, rng)?;
    if aug.noise_prob > 0.0 && rng.random::<f64>() < aug.noise_prob {
        if noise.is_empty() {
            return Err(Error::InvalidConfig("noise augmentation needs a noise pool".into()));
        }
        let pick = &noise.clips[rng.random_range(0..noise.clips.len())];
        let snr = draw_snr(aug.snr_range_db, rng);
        audio = mix_noise_at_snr(&audio, pick, snr, rng)?.mixed;
    }
    frontend.features(&audio)
}

pub fn make_training_example(
    entry: &ManifestEntry,
    noise: &NoisePool,
    aug: &AugmentConfig,
    frontend: &Frontend,
    rng: &mut Rng,
) -> Result<(FeatureMatrix, usize)> {
    let clip = load_wav(&entry.audio_path)?;
    Ok((prepare_example(&clip, noise, aug, frontend, rng)?, entry.class))
}
