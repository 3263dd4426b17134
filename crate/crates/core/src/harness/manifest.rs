use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{CorpusManifest, ManifestEntry};

/// Reads and validates a JSON-lines manifest. Entry paths are resolved
/// against the manifest's directory and must exist.
pub fn parse_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(entry.utterance_id.clone()) {
            return Err(Error::Manifest {
                line: line_no,
                message: format!("duplicate utterance_id {}", entry.utterance_id),
            });
        }
        if !root.join(&entry.path).is_file() {
            return Err(Error::Manifest {
                line: line_no,
                message: format!("missing audio file {}", entry.path),
            });
        }
        entries.push(entry);
    }
    Ok(CorpusManifest { root, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, dataset: &str) -> String {
        format!(
            r#"{{"utterance_id":"{id}","speaker_id":"spk000","path":"a.wav","label":"NS","duration_s":2.5,"role":"TEST","dataset":{dataset}}}"#
        )
    }

    fn setup(lines: &[String]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        let p = dir.path().join("manifest.jsonl");
        std::fs::write(&p, lines.join("\n")).unwrap();
        (dir, p)
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        let (_d, p) = setup(&[]);
        assert!(parse_manifest(&p).unwrap().entries.is_empty());
    }

    #[test]
    fn duplicate_id_named() {
        let (_d, p) = setup(&[line("u1", "\"DSET1\""), line("u1", "\"DSET1\"")]);
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("u1"), "{err}");
    }

    #[test]
    fn unknown_tag_and_malformed_lines() {
        let (_d, p) = setup(&[line("u1", "\"DSET1\""), line("u2", "\"DSET9\"")]);
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("DSET9"), "{err}");
        let (_d, p) = setup(&["{not json".to_string()]);
        assert!(matches!(parse_manifest(&p), Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn missing_audio_rejected() {
        let (d, p) = setup(&[line("u1", "null")]);
        assert!(parse_manifest(&p).is_ok());
        std::fs::remove_file(d.path().join("a.wav")).unwrap();
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }
}
