use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: String,
    pub speaker: String,
}

/// Utterance list read from a `id,path,label,speaker` CSV file. Relative
/// paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    classes: Vec<String>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Data("manifest has no entries".into()));
        }
        let mut ids = BTreeSet::new();
        for e in &entries {
            if e.speaker.trim().is_empty() {
                return Err(Error::Data(format!("utterance {} has no speaker", e.id)));
            }
            if !ids.insert(&e.id) {
                return Err(Error::Data(format!("duplicate utterance id {}", e.id)));
            }
        }
        let classes: BTreeSet<&String> = entries.iter().map(|e| &e.label).collect();
        let classes = classes.into_iter().cloned().collect();
        Ok(DatasetManifest { entries, classes })
    }

    /// Class names in id order; class ids are contiguous `0..C`.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_id(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "path", "label", "speaker"] {
            return Err(Error::Format(format!(
                "{}: header must be `id,path,label,speaker`, found `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for row in reader.deserialize::<ManifestEntry>() {
            let mut e = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            entries.push(e);
        }
        Self::new(entries)
    }

    /// Writes the manifest with paths relative to the manifest's directory
    /// where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for e in &self.entries {
            let rel = e.path.strip_prefix(base).unwrap_or(&e.path).to_path_buf();
            w.serialize(ManifestEntry { path: rel, ..e.clone() })
                .map_err(|err| Error::Format(err.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_map_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,path,label,speaker\na,wav/a.wav,sad,s1\nb,/abs/b.wav,angry,s2\nc,c.wav,sad,s2\n").unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        assert_eq!(m.classes(), ["angry", "sad"]);
        assert_eq!(m.class_id("sad"), Some(1));
        assert_eq!(m.entries[0].path, dir.path().join("wav/a.wav"));
        assert_eq!(m.entries[1].path, PathBuf::from("/abs/b.wav"));
        let q = dir.path().join("copy.csv");
        m.save(&q).unwrap();
        assert_eq!(DatasetManifest::load(&q).unwrap(), m);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,file,label,speaker\na,a.wav,sad,s1\n").unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(Error::Format(_))));
        std::fs::write(&p, "id,path,label,speaker\na,a.wav,sad,\n").unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(Error::Data(_))));
    }
}
