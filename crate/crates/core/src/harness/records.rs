//! JSON-lines files for i-vectors and speaker templates.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::backend::SpeakerTemplate;
use crate::error::{Error, Result};
use crate::synth::{CompositeLabel, DatasetTag, SplitRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvectorRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: CompositeLabel,
    pub role: SplitRole,
    pub dataset: Option<DatasetTag>,
    pub w: Vec<f64>,
}

impl IvectorRecord {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub speaker_id: String,
    pub utterances: usize,
    pub vector: Vec<f64>,
}

impl From<&SpeakerTemplate> for TemplateRecord {
    fn from(t: &SpeakerTemplate) -> Self {
        Self {
            speaker_id: t.speaker_id.clone(),
            utterances: t.utterances,
            vector: t.vector.iter().copied().collect(),
        }
    }
}

impl From<TemplateRecord> for SpeakerTemplate {
    fn from(r: TemplateRecord) -> Self {
        SpeakerTemplate {
            speaker_id: r.speaker_id,
            vector: DVector::from_vec(r.vector),
            utterances: r.utterances,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let _ = writeln!(out, "{line}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Manifest {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}
