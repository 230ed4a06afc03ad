//! Cosine distance between embedding sequences.
//!
//! A sequence of `L` windows is compared as the concatenation of its `L`
//! vectors. A shorter enrollment slides over the query one window at a
//! time; a longer enrollment is compared once against the query with zero
//! vectors prepended.

use crate::error::{Error, Result};

/// Guards the denominator when a vector is all zeros.
pub const COSINE_EPS: f64 = 1e-12;

/// Ordered per-window embeddings of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub vectors: Vec<Vec<f32>>,
    /// Start of each 1 s window, in milliseconds.
    pub window_offsets_ms: Vec<u64>,
}

impl EmbeddingSequence {
    /// Vectors at offsets 0, 100, 200, ... ms.
    pub fn new(vectors: Vec<Vec<f32>>) -> Self {
        let window_offsets_ms = (0..vectors.len() as u64).map(|i| i * 100).collect();
        Self {
            vectors,
            window_offsets_ms,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<usize> {
        let dim = self.dim();
        if self.is_empty() {
            return Err(Error::EmptySequence);
        }
        if self.vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::ShapeMismatch("ragged embedding sequence".into()));
        }
        Ok(dim)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn from_parts(dot: f64, norm_a_sq: f64, norm_b_sq: f64) -> f64 {
    let d = 1.0 - dot / (norm_a_sq.sqrt() * norm_b_sq.sqrt() + COSINE_EPS);
    d.clamp(0.0, 2.0)
}

/// `1 - a.b / (|a| |b| + eps)`, clamped to [0, 2] against rounding.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(from_parts(dot(a, b), dot(a, a), dot(b, b)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub distance: f64,
    /// Query window where the best alignment starts; 0 in the padded case.
    pub offset: usize,
}

/// Best alignment of `enrollment` against `query`. Ties go to the earliest
/// offset.
pub fn match_score(enrollment: &EmbeddingSequence, query: &EmbeddingSequence) -> Result<MatchScore> {
    let de = enrollment.check()?;
    let dq = query.check()?;
    if de != dq {
        return Err(Error::ShapeMismatch(format!("embedding dims {de} and {dq}")));
    }
    let (le, lq) = (enrollment.len(), query.len());
    let e_norm: f64 = enrollment.vectors.iter().map(|v| dot(v, v)).sum();
    let q_norms: Vec<f64> = query.vectors.iter().map(|v| dot(v, v)).collect();

    if le > lq {
        // enrollment window le - lq + k lines up with query window k
        let pad = le - lq;
        let d: f64 = (0..lq).map(|k| dot(&enrollment.vectors[pad + k], &query.vectors[k])).sum();
        return Ok(MatchScore {
            distance: from_parts(d, e_norm, q_norms.iter().sum()),
            offset: 0,
        });
    }

    let mut best = MatchScore {
        distance: f64::INFINITY,
        offset: 0,
    };
    for off in 0..=lq - le {
        let d: f64 = (0..le).map(|k| dot(&enrollment.vectors[k], &query.vectors[off + k])).sum();
        let q: f64 = q_norms[off..off + le].iter().sum();
        let distance = from_parts(d, e_norm, q);
        if distance < best.distance {
            best = MatchScore { distance, offset: off };
        }
    }
    Ok(best)
}
