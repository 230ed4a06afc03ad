//! Incremental detection over a live sample stream.

use std::collections::VecDeque;

use super::matching::EmbeddingSequence;
use super::profile::EnrollmentProfile;
use super::{score_profile, DetectionResult, Model};
use crate::audio::AudioClip;
use crate::error::Result;

/// One detection emitted by [`StreamDetector::push`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamEvent {
    pub result: DetectionResult,
    /// Stream position (ms) where the newest 1 s window ends.
    pub end_ms: u64,
    /// True once the query holds as many windows as the longest enrollment;
    /// earlier events compare against a left-padded query.
    pub warm: bool,
}

/// Keeps the last second of audio and the embeddings of the most recent
/// windows, as many as the longest enrollment.
///
/// A new window starts every hop (100 ms). Each time the stream reaches the
/// end of a window, that window is embedded and one event is emitted for
/// the query made of the buffered windows.
pub struct StreamDetector<'m> {
    model: &'m Model,
    profile: EnrollmentProfile,
    threshold: f64,
    audio: VecDeque<f32>,
    windows: VecDeque<Vec<f32>>,
    received: u64,
    next_end: u64,
}

impl<'m> StreamDetector<'m> {
    pub fn new(model: &'m Model, profile: EnrollmentProfile, threshold: f64) -> Result<Self> {
        profile.check_fingerprint(&model.fingerprint)?;
        let window = model.window_samples() as u64;
        Ok(Self {
            model,
            profile,
            threshold,
            audio: VecDeque::with_capacity(window as usize),
            windows: VecDeque::new(),
            received: 0,
            next_end: window,
        })
    }

    pub fn samples_received(&self) -> u64 {
        self.received
    }

    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<StreamEvent>> {
        let window = self.model.window_samples();
        let hop = self.model.hop_samples() as u64;
        let capacity = self.profile.max_len();
        let mut events = Vec::new();
        for &s in samples {
            if self.audio.len() == window {
                self.audio.pop_front();
            }
            self.audio.push_back(s);
            self.received += 1;
            if self.received < self.next_end {
                continue;
            }
            self.next_end += hop;
            let clip = AudioClip::new(self.audio.iter().copied().collect());
            let z = self.model.embed_window(&clip)?;
            if self.windows.len() == capacity {
                self.windows.pop_front();
            }
            self.windows.push_back(z);
            let query = EmbeddingSequence::new(self.windows.iter().cloned().collect());
            let result = score_profile(&self.profile, &query, self.threshold)?;
            events.push(StreamEvent {
                result,
                end_ms: self.received * 1000 / self.model.sample_rate() as u64,
                warm: self.windows.len() == capacity,
            });
        }
        Ok(events)
    }
}
