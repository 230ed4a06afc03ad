use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

/// One manifest row as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub audio_path: String,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Resolved against the manifest's directory when relative.
    pub audio_path: PathBuf,
    pub label: String,
    pub class: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Class names; index = class id. Sorted lexicographically.
    pub labels: Vec<String>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }
}

/// Parses a JSONL manifest. Relative audio paths are resolved against
/// `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(line).map_err(|e| Error::ManifestLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        let path = base_dir.join(&row.audio_path);
        if !path.is_file() {
            return Err(Error::ManifestLine {
                line: i + 1,
                message: format!("audio file {} not found", path.display()),
            });
        }
        rows.push((row, path));
    }
    if rows.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let labels: Vec<String> = rows
        .iter()
        .map(|(r, _)| r.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let entries = rows
        .into_iter()
        .map(|(row, audio_path)| ManifestEntry {
            class: labels.binary_search(&row.label).expect("label collected above"),
            audio_path,
            label: row.label,
            split: row.split,
        })
        .collect();
    Ok(Manifest { entries, labels })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
