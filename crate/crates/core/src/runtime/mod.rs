//! Query-by-example inference: sliding-window embeddings, enrollment,
//! matching and thresholded detection.

mod matching;
mod profile;
mod stream;

use rayon::prelude::*;

pub use matching::{cosine_distance, match_score, EmbeddingSequence, MatchScore, COSINE_EPS};
pub use profile::{EnrollmentProfile, PROFILE_VERSION};
pub use stream::{StreamDetector, StreamEvent};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::Frontend;
use crate::mixer::{embed, MixerConfig, MixerParams};
use crate::training::Checkpoint;

/// Window stride for embedding extraction.
pub const HOP_MS: u64 = 100;

/// Frozen encoder plus the frontend it was trained with.
#[derive(Clone)]
pub struct Model {
    pub mixer: MixerConfig,
    pub frontend: Frontend,
    pub params: MixerParams<f32>,
    pub fingerprint: String,
}

impl Model {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self {
            mixer: ck.mixer.clone(),
            frontend: Frontend::new(ck.frontend.clone())?,
            params: ck.params.without_decoder(),
            fingerprint: ck.fingerprint(),
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.frontend.config().sample_rate
    }

    pub fn window_samples(&self) -> usize {
        self.frontend.config().clip_samples()
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate() as u64 * HOP_MS / 1000) as usize
    }

    /// Embedding of exactly one window of audio.
    pub fn embed_window(&self, clip: &AudioClip) -> Result<Vec<f32>> {
        let feat = self.frontend.features(clip)?;
        Ok(embed(&feat, &self.params, &self.mixer)?.0)
    }
}

/// Embeds 1 s windows every 100 ms. Clips shorter than a window are
/// zero-padded on the right to one window.
pub fn embed_utterance(clip: &AudioClip, model: &Model) -> Result<EmbeddingSequence> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    let window = model.window_samples();
    let hop = model.hop_samples();
    let mut samples = clip.samples.clone();
    if samples.len() < window {
        samples.resize(window, 0.0);
    }
    let count = (samples.len() - window) / hop + 1;
    let vectors = (0..count)
        .into_par_iter()
        .map(|k| model.embed_window(&AudioClip::new(samples[k * hop..k * hop + window].to_vec())))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingSequence {
        vectors,
        window_offsets_ms: (0..count as u64).map(|k| k * HOP_MS).collect(),
    })
}

pub fn enroll(keyword_id: &str, clips: &[AudioClip], model: &Model) -> Result<EnrollmentProfile> {
    if clips.is_empty() {
        return Err(Error::NoEnrollments);
    }
    let enrollments = clips
        .iter()
        .map(|c| embed_utterance(c, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnrollmentProfile {
        keyword_id: keyword_id.to_string(),
        enrollments,
        fingerprint: model.fingerprint.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    /// Smallest match distance over the profile's enrollments.
    pub score: f64,
    /// `score < threshold`.
    pub triggered: bool,
    pub best_enrollment_index: usize,
    pub best_alignment_offset: usize,
}

/// Scores `query` against every enrollment without checking fingerprints.
pub fn score_profile(profile: &EnrollmentProfile, query: &EmbeddingSequence, threshold: f64) -> Result<DetectionResult> {
    if profile.enrollments.is_empty() {
        return Err(Error::NoEnrollments);
    }
    let mut best: Option<(usize, MatchScore)> = None;
    for (i, e) in profile.enrollments.iter().enumerate() {
        let m = match_score(e, query)?;
        if best.is_none_or(|(_, b)| m.distance < b.distance) {
            best = Some((i, m));
        }
    }
    let (index, m) = best.expect("nonempty profile");
    Ok(DetectionResult {
        score: m.distance,
        triggered: m.distance < threshold,
        best_enrollment_index: index,
        best_alignment_offset: m.offset,
    })
}

/// Detection for a query from the model identified by `model_fingerprint`.
pub fn detect(
    profile: &EnrollmentProfile,
    query: &EmbeddingSequence,
    threshold: f64,
    model_fingerprint: &str,
) -> Result<DetectionResult> {
    profile.check_fingerprint(model_fingerprint)?;
    score_profile(profile, query, threshold)
}
