//! Enrollment profiles on disk.
//!
//! JSON object:
//!
//! ```text
//! { "version": 1, "keyword_id": "...", "fingerprint": "<16 hex>",
//!   "n": 3, "dim": 81,
//!   "enrollments": [ { "window_offsets_ms": [0, 100], "data": "<base64>" }, ... ] }
//! ```
//!
//! `data` is the base64 of the sequence's vectors as concatenated
//! little-endian f32 values.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::matching::EmbeddingSequence;
use crate::error::{Error, Result};

pub const PROFILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentProfile {
    pub keyword_id: String,
    pub enrollments: Vec<EmbeddingSequence>,
    /// Fingerprint of the encoder that produced the embeddings.
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct StoredSequence {
    window_offsets_ms: Vec<u64>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct StoredProfile {
    version: u32,
    keyword_id: String,
    fingerprint: String,
    n: usize,
    dim: usize,
    enrollments: Vec<StoredSequence>,
}

impl EnrollmentProfile {
    pub fn dim(&self) -> usize {
        self.enrollments.first().map_or(0, EmbeddingSequence::dim)
    }

    /// Longest enrollment, in windows.
    pub fn max_len(&self) -> usize {
        self.enrollments.iter().map(EmbeddingSequence::len).max().unwrap_or(0)
    }

    pub fn check_fingerprint(&self, model: &str) -> Result<()> {
        if self.fingerprint != model {
            return Err(Error::FingerprintMismatch {
                profile: self.fingerprint.clone(),
                model: model.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let stored = StoredProfile {
            version: PROFILE_VERSION,
            keyword_id: self.keyword_id.clone(),
            fingerprint: self.fingerprint.clone(),
            n: self.enrollments.len(),
            dim: self.dim(),
            enrollments: self
                .enrollments
                .iter()
                .map(|s| {
                    let bytes: Vec<u8> = s.vectors.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
                    StoredSequence {
                        window_offsets_ms: s.window_offsets_ms.clone(),
                        data: STANDARD.encode(bytes),
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&stored).expect("serializable profile")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidHeader(format!("profile: {m}"));
        let stored: StoredProfile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if stored.version != PROFILE_VERSION {
            return Err(Error::VersionMismatch {
                expected: PROFILE_VERSION,
                found: stored.version,
            });
        }
        if stored.n != stored.enrollments.len() || stored.n == 0 || stored.dim == 0 {
            return Err(bad(format!("n = {}, dim = {}", stored.n, stored.dim)));
        }
        let enrollments = stored
            .enrollments
            .into_iter()
            .map(|s| {
                let bytes = STANDARD.decode(&s.data).map_err(|e| bad(e.to_string()))?;
                let want = 4 * stored.dim * s.window_offsets_ms.len();
                if bytes.len() != want || want == 0 {
                    return Err(bad(format!("{} payload bytes, expected {want}", bytes.len())));
                }
                let values: Vec<f32> = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok(EmbeddingSequence {
                    vectors: values.chunks(stored.dim).map(<[f32]>::to_vec).collect(),
                    window_offsets_ms: s.window_offsets_ms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            keyword_id: stored.keyword_id,
            enrollments,
            fingerprint: stored.fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> EnrollmentProfile {
        EnrollmentProfile {
            keyword_id: "hey".into(),
            enrollments: vec![
                EmbeddingSequence::new(vec![vec![0.5, -1.25, 3.0]]),
                EmbeddingSequence::new(vec![vec![1.0, 2.0, 3.0], vec![f32::MIN_POSITIVE, -0.0, 7.5]]),
            ],
            fingerprint: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = profile();
        let back = EnrollmentProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert!(back.enrollments[1].vectors[1][1].is_sign_negative());
        assert_eq!(back.max_len(), 2);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["dim"], 3);
        assert_eq!(v["enrollments"][1]["window_offsets_ms"][1], 100);
    }

    #[test]
    fn rejects_bad_payloads() {
        let text = profile().to_json();
        let v2 = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(EnrollmentProfile::from_json(&v2), Err(Error::VersionMismatch { .. })));
        let wrong_dim = text.replace("\"dim\": 3", "\"dim\": 4");
        assert!(EnrollmentProfile::from_json(&wrong_dim).is_err());
        assert!(EnrollmentProfile::from_json("{}").is_err());
    }

    #[test]
    fn fingerprint_check() {
        let p = profile();
        assert!(p.check_fingerprint("0123456789abcdef").is_ok());
        assert!(matches!(
            p.check_fingerprint("ffffffffffffffff"),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
