//! Manifest text format.
//!
//! ```text
//! # comment lines start with '#'; blank lines are skipped
//! @labels<TAB>whistle<TAB>burst<TAB>buzz
//! clips/whistle_000.wav<TAB>whistle<TAB>p i i<TAB>p i: i
//! ```
//!
//! The `@labels` header must appear exactly once, before any record, and
//! fixes the class order. Each record is a relative (to the manifest file)
//! or absolute audio path, a label from the header, and one or more
//! transcriptions. Fields are separated by single tabs and may not be empty.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::DataError;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub audio_path: PathBuf,
    pub label: String,
    pub onomatopoeias: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub labels: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative audio paths resolve against.
    pub root: PathBuf,
}

/// One (clip, transcription) training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub entry: usize,
    pub label: usize,
    pub onomatopoeia: String,
}

impl Manifest {
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let mut labels: Option<Vec<String>> = None;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(DataError::parse(line, "empty field"));
            }
            if fields[0] == "@labels" {
                if labels.is_some() {
                    return Err(DataError::parse(line, "duplicate @labels header"));
                }
                let names: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
                if names.is_empty() {
                    return Err(DataError::parse(line, "@labels lists no classes"));
                }
                if names.iter().collect::<HashSet<_>>().len() != names.len() {
                    return Err(DataError::parse(line, "duplicate class name"));
                }
                labels = Some(names);
                continue;
            }
            let Some(label_set) = &labels else {
                return Err(DataError::parse(line, "record before @labels header"));
            };
            if fields.len() < 3 {
                return Err(DataError::parse(
                    line,
                    "expected path, label and at least one onomatopoeia",
                ));
            }
            let label = fields[1].to_string();
            if !label_set.contains(&label) {
                return Err(DataError::UnknownLabel { line, label });
            }
            let audio_path = PathBuf::from(fields[0]);
            if !seen.insert(audio_path.clone()) {
                return Err(DataError::parse(line, "duplicate audio path"));
            }
            entries.push(ManifestEntry {
                audio_path,
                label,
                onomatopoeias: fields[2..].iter().map(|s| s.trim().to_string()).collect(),
            });
        }
        let labels = labels.ok_or_else(|| DataError::parse(0, "missing @labels header"))?;
        Ok(Self {
            labels,
            entries,
            root: root.into(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("@labels\t{}\n", self.labels.join("\t"));
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.audio_path.display(),
                e.label,
                e.onomatopoeias.join("\t")
            ));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.audio_path)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Every transcription of every entry as its own example, in manifest
    /// order.
    pub fn pairs(&self) -> Vec<PairRef> {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(i, e)| {
                let label = self.label_index(&e.label).unwrap_or(0);
                e.onomatopoeias.iter().map(move |o| PairRef {
                    entry: i,
                    label,
                    onomatopoeia: o.clone(),
                })
            })
            .collect()
    }

    pub fn n_pairs(&self) -> usize {
        self.entries.iter().map(|e| e.onomatopoeias.len()).sum()
    }

    /// Copy restricted to the given entries, in the given order.
    pub fn subset(&self, entries: &[usize]) -> Self {
        Self {
            labels: self.labels.clone(),
            entries: entries.iter().map(|&i| self.entries[i].clone()).collect(),
            root: self.root.clone(),
        }
    }
}

/// Parses a manifest file and checks that every audio file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = Manifest::parse(&text, root)?;
    for e in &manifest.entries {
        let p = manifest.resolve(e);
        if !p.is_file() {
            return Err(DataError::MissingAudio(p));
        }
    }
    Ok(manifest)
}
