//! FRR at a false-accepts-per-hour operating point.
//!
//! Every (negative utterance, profile) pair is one chance of a false
//! accept, decided by its best alignment score, and contributes the
//! utterance's duration to the negative-hours denominator.

mod dataset;

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{load_eval_set, parse_eval_set, run_eval, EvalRole, EvalRow, EvalSet};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::runtime::{embed_utterance, score_profile, EnrollmentProfile, Model};

pub const DEFAULT_TARGET_FA_PER_HOUR: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// A query clip; positives name the profile they should match.
#[derive(Debug, Clone)]
pub struct QueryUtterance {
    pub id: String,
    pub clip: AudioClip,
    pub profile: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredUtterance {
    pub utterance_id: String,
    pub profile_index: usize,
    pub score: f64,
    pub duration_s: f64,
}

/// Positive: each query against its own profile. Negative: each query
/// against every profile, one row per pair.
pub fn score_set(
    profiles: &[EnrollmentProfile],
    utterances: &[QueryUtterance],
    model: &Model,
    polarity: Polarity,
) -> Result<Vec<ScoredUtterance>> {
    for p in profiles {
        p.check_fingerprint(&model.fingerprint)?;
    }
    let rows = utterances
        .par_iter()
        .map(|u| {
            let query = embed_utterance(&u.clip, model)?;
            let targets: Vec<usize> = match polarity {
                Polarity::Positive => {
                    let i = u.profile.ok_or_else(|| {
                        Error::InvalidConfig(format!("positive utterance {} has no profile", u.id))
                    })?;
                    if i >= profiles.len() {
                        return Err(Error::InvalidConfig(format!("utterance {} names profile {i}", u.id)));
                    }
                    vec![i]
                }
                Polarity::Negative => (0..profiles.len()).collect(),
            };
            targets
                .into_iter()
                .map(|i| {
                    Ok(ScoredUtterance {
                        utterance_id: u.id.clone(),
                        profile_index: i,
                        score: score_profile(&profiles[i], &query, f64::INFINITY)?.score,
                        duration_s: u.clip.duration_s(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Total duration of the rows in hours (each pairing counted once).
pub fn negative_hours(rows: &[ScoredUtterance]) -> f64 {
    rows.iter().map(|r| r.duration_s).sum::<f64>() / 3600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fa_per_hour: f64,
    pub frr_percent: f64,
}

/// Candidate thresholds: every distinct observed score, ascending, then the
/// maximum plus one.
pub fn thresholds(pos: &[f64], neg: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    if let Some(&max) = all.last() {
        all.push(max + 1.0);
    }
    all
}

/// ROC over [`thresholds`]: a negative is a false accept when its score is
/// below the threshold, a positive is rejected when its score is not.
pub fn sweep_roc(pos: &[f64], neg: &[f64], negative_hours: f64) -> Result<Vec<RocPoint>> {
    if !(negative_hours > 0.0) {
        return Err(Error::ZeroNegativeHours);
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidConfig("need positive and negative scores".into()));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut p = pos.to_vec();
    let mut n = neg.to_vec();
    p.sort_by(f64::total_cmp);
    n.sort_by(f64::total_cmp);
    Ok(thresholds(pos, neg)
        .into_iter()
        .map(|tau| {
            let fa = n.partition_point(|&s| s < tau);
            let accepted = p.partition_point(|&s| s < tau);
            RocPoint {
                threshold: tau,
                fa_per_hour: fa as f64 / negative_hours,
                frr_percent: 100.0 * (p.len() - accepted) as f64 / p.len() as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrrAtFa {
    pub frr_percent: f64,
    /// Threshold achieving it; `None` when no point qualifies.
    pub threshold: Option<f64>,
    /// Set when no point meets the target and 100% is reported.
    pub warning: bool,
}

/// FRR at the largest threshold whose FA/hr does not exceed `target`.
pub fn frr_at_fa(roc: &[RocPoint], target_fa_per_hour: f64) -> FrrAtFa {
    roc.iter()
        .filter(|p| p.fa_per_hour <= target_fa_per_hour)
        .max_by(|a, b| a.threshold.total_cmp(&b.threshold))
        .map_or(
            FrrAtFa {
                frr_percent: 100.0,
                threshold: None,
                warning: true,
            },
            |p| FrrAtFa {
                frr_percent: p.frr_percent,
                threshold: Some(p.threshold),
                warning: false,
            },
        )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
    pub frr_at_target: f64,
    pub target: f64,
    pub threshold: Option<f64>,
    pub warning: bool,
    pub negative_hours: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl EvalReport {
    pub fn from_scores(pos: &[f64], neg: &[f64], negative_hours: f64, target: f64) -> Result<Self> {
        let roc = sweep_roc(pos, neg, negative_hours)?;
        let at = frr_at_fa(&roc, target);
        Ok(Self {
            roc,
            frr_at_target: at.frr_percent,
            target,
            threshold: at.threshold,
            warning: at.warning,
            negative_hours,
            n_pos: pos.len(),
            n_neg: neg.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }
}

/// `threshold,fa_per_hour,frr_percent` with six decimals.
pub fn write_roc_csv(roc: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("threshold,fa_per_hour,frr_percent\n");
    for p in roc {
        out.push_str(&format!("{:.6},{:.6},{:.6}\n", p.threshold, p.fa_per_hour, p.frr_percent));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
