use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::{CompositeLabel, DatasetTag, SplitRole};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One line of the JSON-lines manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: CompositeLabel,
    pub duration_s: f64,
    pub role: SplitRole,
    /// `None` for background speakers.
    pub dataset: Option<DatasetTag>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    /// Directory that entry paths are relative to.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn select(&self, role: SplitRole, dataset: Option<DatasetTag>) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.role == role && (dataset.is_none() || e.dataset == dataset))
    }

    /// Speaker ids in first-appearance order.
    pub fn speakers(&self, role: SplitRole) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| e.role == role) {
            if seen.insert(e.speaker_id.as_str()) {
                out.push(e.speaker_id.clone());
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|err| Error::InvalidInput(err.to_string()))?;
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl()?.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}
