//! Image folder ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::is_supported;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// File stem, unique within the manifest.
    pub id: String,
    pub path: PathBuf,
    pub identity: Option<String>,
    pub attributes: Option<Vec<f64>>,
    pub segmentation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub attribute_names: Vec<String>,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Identity label of each entry, falling back to the image id.
    pub fn identity_of(&self, entry: &DatasetEntry) -> String {
        entry.identity.clone().unwrap_or_else(|| entry.id.clone())
    }

    pub fn has_identity_labels(&self) -> bool {
        self.entries.iter().any(|e| e.identity.is_some())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Scans the top level of `dir` for supported images, sorted by file name.
/// `labels` is an optional CSV with an `id` column and any of `identity`,
/// `segmentation` (relative to `dir`) and numeric attribute columns.
pub fn ingest(dir: &Path, labels: Option<&Path>) -> Result<DatasetManifest> {
    let mut paths = Vec::new();
    for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = item.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_supported(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut by_id: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut entries = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::format(&path, "file name is not valid UTF-8"))?
            .to_string();
        if let Some(first) = by_id.insert(id.clone(), path.clone()) {
            return Err(Error::DuplicateId {
                id,
                first,
                second: path,
            });
        }
        entries.push(DatasetEntry {
            id,
            path,
            identity: None,
            attributes: None,
            segmentation: None,
        });
    }
    if entries.is_empty() {
        log::warn!("no supported images in {}", dir.display());
    }
    let mut manifest = DatasetManifest {
        root: dir.to_path_buf(),
        attribute_names: Vec::new(),
        entries,
    };
    if let Some(labels) = labels {
        apply_labels(&mut manifest, labels)?;
    }
    Ok(manifest)
}

fn apply_labels(manifest: &mut DatasetManifest, path: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| Error::format(path, "labels need an `id` column"))?;
    let identity_col = col("identity");
    let seg_col = col("segmentation");
    let attr_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != id_col && Some(c) != identity_col && Some(c) != seg_col)
        .collect();
    manifest.attribute_names = attr_cols.iter().map(|&c| header[c].clone()).collect();
    let index: BTreeMap<String, usize> = manifest.entries.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
    let mut seen = BTreeSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).map(str::trim).unwrap_or("");
        let id = field(id_col).to_string();
        let &i = index
            .get(&id)
            .ok_or_else(|| Error::Inconsistent(format!("labels row {} names `{id}`, which has no image", row + 1)))?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                first: path.to_path_buf(),
                second: path.to_path_buf(),
            });
        }
        let entry = &mut manifest.entries[i];
        if let Some(c) = identity_col {
            entry.identity = Some(field(c).to_string()).filter(|s| !s.is_empty());
        }
        if let Some(c) = seg_col {
            let rel = field(c);
            if !rel.is_empty() {
                let seg = manifest.root.join(rel);
                if !seg.is_file() {
                    return Err(Error::Inconsistent(format!(
                        "segmentation for `{id}` not found: {}",
                        seg.display()
                    )));
                }
                entry.segmentation = Some(seg);
            }
        }
        if !attr_cols.is_empty() {
            let values = attr_cols
                .iter()
                .map(|&c| {
                    field(c).parse::<f64>().map_err(|_| {
                        Error::format(path, format!("row {}: `{}` is not a number", row + 1, field(c)))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entry.attributes = Some(values);
        }
    }
    Ok(())
}
