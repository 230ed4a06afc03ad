//! JSONL evaluation sets.
//!
//! Each row is `{"audio_path", "speaker", "keyword", "role"}` with role one
//! of `enroll`, `query`, `negative`. Enroll rows sharing a (speaker,
//! keyword) pair form one profile; query rows are scored against the
//! profile with the same pair; negative rows (keyword may be null) against
//! every profile.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{negative_hours, score_set, EvalReport, Polarity, QueryUtterance};
use crate::audio::load_wav;
use crate::error::{Error, Result};
use crate::runtime::{enroll, EnrollmentProfile, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRole {
    Enroll,
    Query,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub audio_path: PathBuf,
    pub speaker: String,
    pub keyword: Option<String>,
    pub role: EvalRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub rows: Vec<EvalRow>,
}

pub fn parse_eval_set(text: &str, base_dir: &Path) -> Result<EvalSet> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row: EvalRow = serde_json::from_str(line).map_err(|e| Error::ManifestLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if row.role != EvalRole::Negative && row.keyword.is_none() {
            return Err(Error::ManifestLine {
                line: i + 1,
                message: "enroll and query rows need a keyword".into(),
            });
        }
        if row.audio_path.is_relative() {
            row.audio_path = base_dir.join(&row.audio_path);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok(EvalSet { rows })
}

pub fn load_eval_set(path: impl AsRef<Path>) -> Result<EvalSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_eval_set(&text, path.parent().unwrap_or(Path::new(".")))
}

fn profile_key(row: &EvalRow) -> String {
    format!("{}/{}", row.speaker, row.keyword.as_deref().unwrap_or(""))
}

/// Enrolls every profile, scores queries and negatives and sweeps the ROC.
pub fn run_eval(set: &EvalSet, model: &Model, target_fa_per_hour: f64) -> Result<(EvalReport, Vec<EnrollmentProfile>)> {
    let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for row in set.rows.iter().filter(|r| r.role == EvalRole::Enroll) {
        groups.entry(profile_key(row)).or_default().push(load_wav(&row.audio_path)?);
    }
    let keys: Vec<String> = groups.keys().cloned().collect();
    let profiles = groups
        .iter()
        .map(|(key, clips)| enroll(key, clips, model))
        .collect::<Result<Vec<_>>>()?;

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for row in &set.rows {
        let id = row.audio_path.display().to_string();
        match row.role {
            EvalRole::Enroll => {}
            EvalRole::Query => {
                let key = profile_key(row);
                let index = keys
                    .binary_search(&key)
                    .map_err(|_| Error::InvalidConfig(format!("query {id} has no enrollment for {key}")))?;
                positives.push(QueryUtterance {
                    id,
                    clip: load_wav(&row.audio_path)?,
                    profile: Some(index),
                });
            }
            EvalRole::Negative => negatives.push(QueryUtterance {
                id,
                clip: load_wav(&row.audio_path)?,
                profile: None,
            }),
        }
    }
    let pos = score_set(&profiles, &positives, model, Polarity::Positive)?;
    let neg = score_set(&profiles, &negatives, model, Polarity::Negative)?;
    let pos_scores: Vec<f64> = pos.iter().map(|r| r.score).collect();
    let neg_scores: Vec<f64> = neg.iter().map(|r| r.score).collect();
    let report = EvalReport::from_scores(&pos_scores, &neg_scores, negative_hours(&neg), target_fa_per_hour)?;
    Ok((report, profiles))
}
