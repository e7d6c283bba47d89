//! Dataset manifests: one CSV row per sample pairing a feature tensor with
//! optional image, mask, confidence pair and embedding pair.
//!
//! Columns are fixed (see [`MANIFEST_COLUMNS`]); empty cells mean absent.
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_COLUMNS: [&str; 8] = [
    "id",
    "features",
    "image",
    "mask",
    "p",
    "o",
    "embedding",
    "embedding_masked",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub features: PathBuf,
    pub image: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    /// Class probability on the original and the saliency-masked image.
    pub confidence: Option<(f64, f64)>,
    pub embeddings: Option<(PathBuf, PathBuf)>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, features: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            features: features.into(),
            image: None,
            mask: None,
            confidence: None,
            embeddings: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

fn cell(record: &csv::StringRecord, i: usize) -> Option<&str> {
    record.get(i).map(str::trim).filter(|s| !s.is_empty())
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Manifest(format!("unreadable header: {e}")))?
            .clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != MANIFEST_COLUMNS {
            return Err(Error::Manifest(format!(
                "expected columns {}, found {}",
                MANIFEST_COLUMNS.join(","),
                names.join(",")
            )));
        }

        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Manifest(format!("line {line}: {e}")))?;
            let id = cell(&record, 0)
                .ok_or_else(|| Error::Manifest(format!("line {line}: empty id")))?
                .to_owned();
            if !seen.insert(id.clone()) {
                return Err(Error::Manifest(format!("line {line}: duplicate id {id:?}")));
            }
            let features = cell(&record, 1)
                .ok_or_else(|| Error::Manifest(format!("line {line}: entry {id:?} has no features path")))?;
            let number = |col: usize| -> Result<Option<f64>> {
                cell(&record, col)
                    .map(|s| {
                        s.parse::<f64>().map_err(|_| {
                            Error::Manifest(format!(
                                "line {line}: column {} is not a number: {s:?}",
                                MANIFEST_COLUMNS[col]
                            ))
                        })
                    })
                    .transpose()
            };
            let confidence = match (number(4)?, number(5)?) {
                (Some(p), Some(o)) => Some((p, o)),
                (None, None) => None,
                _ => {
                    return Err(Error::Manifest(format!(
                        "line {line}: columns p and o must be given together"
                    )))
                }
            };
            let embeddings = match (cell(&record, 6), cell(&record, 7)) {
                (Some(z), Some(zm)) => Some((resolve(base, z), resolve(base, zm))),
                (None, None) => None,
                _ => {
                    return Err(Error::Manifest(format!(
                        "line {line}: columns embedding and embedding_masked must be given together"
                    )))
                }
            };
            entries.push(ManifestEntry {
                id,
                features: resolve(base, features),
                image: cell(&record, 2).map(|s| resolve(base, s)),
                mask: cell(&record, 3).map(|s| resolve(base, s)),
                confidence,
                embeddings,
            });
        }
        Ok(Self { entries })
    }

    /// Writes the manifest with paths as stored (no relativization).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_owned(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| io_err(e.into()))?;
        w.write_record(MANIFEST_COLUMNS).map_err(|e| io_err(e.into()))?;
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        for e in &self.entries {
            let (p, o) = match e.confidence {
                Some((p, o)) => (p.to_string(), o.to_string()),
                None => Default::default(),
            };
            let (z, zm) = match &e.embeddings {
                Some((z, zm)) => (z.display().to_string(), zm.display().to_string()),
                None => Default::default(),
            };
            w.write_record([
                e.id.clone(),
                e.features.display().to_string(),
                show(&e.image),
                show(&e.mask),
                p,
                o,
                z,
                zm,
            ])
            .map_err(|e| io_err(e.into()))?;
        }
        w.flush().map_err(io_err)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors naming the first entry lacking `column`.
    pub fn require(&self, column: &str) -> Result<()> {
        let present = |e: &ManifestEntry| match column {
            "image" => e.image.is_some(),
            "mask" => e.mask.is_some(),
            "p" | "o" => e.confidence.is_some(),
            "embedding" | "embedding_masked" => e.embeddings.is_some(),
            _ => true,
        };
        match self.entries.iter().find(|e| !present(e)) {
            Some(e) => Err(Error::Manifest(format!(
                "missing column {column:?} for entry {:?}",
                e.id
            ))),
            None => Ok(()),
        }
    }
}
