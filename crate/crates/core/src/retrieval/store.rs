use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::primitives::ExtractConfig;
use crate::relgraph::{graph_from_field, RelationGraph};
use crate::speedmap::{load_csv, load_meta, to_csv_string, SpeedField};

pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const RECORDS: &str = "records";
const RASTERS: &str = "rasters";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordMetadata {
    #[serde(default)]
    pub corridor_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default)]
    pub extent_km: f64,
    #[serde(default)]
    pub duration_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub pattern_id: String,
    pub graph: RelationGraph,
    /// Raster CSV path relative to the index root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster_ref: Option<String>,
    #[serde(default)]
    pub metadata: RecordMetadata,
    pub graph_size: usize,
}

impl PatternRecord {
    pub fn new(graph: RelationGraph, metadata: RecordMetadata) -> Self {
        Self {
            pattern_id: graph.pattern_id.clone(),
            graph_size: graph.graph_size(),
            graph,
            raster_ref: None,
            metadata,
        }
    }

    /// Runs extraction on `field` and records its grid extent.
    pub fn from_field(pattern_id: &str, field: &SpeedField, cfg: &ExtractConfig) -> Result<Self> {
        let graph = graph_from_field(field, cfg, pattern_id)?;
        let metadata = RecordMetadata {
            corridor_id: field.meta().corridor_id.clone(),
            date: None,
            extent_km: field.extent_km(),
            duration_min: field.duration_min(),
        };
        Ok(Self::new(graph, metadata))
    }

    fn check(&self) -> Result<()> {
        validate_id(&self.pattern_id)?;
        let violations = self.graph.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidGraph(violations));
        }
        if self.graph_size != self.graph.graph_size() {
            return Err(Error::Validation(format!(
                "record `{}` claims graph_size {} but its graph has {}",
                self.pattern_id,
                self.graph_size,
                self.graph.graph_size()
            )));
        }
        Ok(())
    }
}

/// Ids become file names: ASCII letters, digits, `.`, `_` and `-` only.
pub fn validate_id(id: &str) -> Result<()> {
    let ok_chars = id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if id.is_empty() || id.len() > 128 || !ok_chars || id.starts_with('.') {
        return Err(Error::Validation(format!(
            "pattern id `{id}` must be 1-128 characters of [A-Za-z0-9._-] and not start with `.`"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pattern_id: String,
    pub path: String,
    pub graph_size: usize,
    /// `sha256:<hex>` of the record file.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreStats {
    pub count: usize,
    /// Number of records per graph size.
    pub size_histogram: BTreeMap<usize, usize>,
}

fn checksum(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Relative path below the root with no `..` or absolute parts.
fn contained(root: &Path, rel: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Integrity(format!("path `{rel}` escapes the index directory")));
    }
    Ok(root.join(p))
}

/// An index directory: `manifest.json`, `records/<id>.json` and optional
/// `rasters/<id>.csv` with a `.meta.json` sidecar.
///
/// Records are loaded and checksum-verified when the store is opened; the
/// in-memory copy then serves queries without touching the disk.
#[derive(Debug, Clone)]
pub struct PatternStore {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    records: Vec<PatternRecord>,
}

impl PatternStore {
    /// Creates an empty index, or opens the one already present.
    pub fn open_or_create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if root.join(MANIFEST).exists() {
            return Self::open(root);
        }
        for dir in [root.to_path_buf(), root.join(RECORDS), root.join(RASTERS)] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let store = Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
            records: Vec::new(),
        };
        store.write_manifest()?;
        Ok(store)
    }

    /// Opens an existing index, verifying every record against the manifest.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("unreadable manifest: {e}")))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Integrity(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        let mut seen = BTreeSet::new();
        let mut records = Vec::with_capacity(manifest.records.len());
        for entry in &manifest.records {
            if !seen.insert(entry.pattern_id.clone()) {
                return Err(Error::Integrity(format!("manifest lists `{}` twice", entry.pattern_id)));
            }
            let path = contained(&root, &entry.path)?;
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if checksum(&bytes) != entry.checksum {
                return Err(Error::Integrity(format!("checksum mismatch for `{}`", entry.pattern_id)));
            }
            let record: PatternRecord = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Integrity(format!("record `{}` is unreadable: {e}", entry.pattern_id)))?;
            if record.pattern_id != entry.pattern_id || record.graph_size != entry.graph_size {
                return Err(Error::Integrity(format!(
                    "record `{}` disagrees with its manifest entry",
                    entry.pattern_id
                )));
            }
            record.check().map_err(|e| Error::Integrity(e.to_string()))?;
            records.push(record);
        }
        Ok(Self {
            root,
            entries: manifest.records,
            records,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[PatternRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pattern_id: &str) -> Option<&PatternRecord> {
        self.records.iter().find(|r| r.pattern_id == pattern_id)
    }

    /// Inserts a record durably. When `raster` is given it is stored next
    /// to the record and referenced from it.
    pub fn add(&mut self, mut record: PatternRecord, raster: Option<&SpeedField>) -> Result<()> {
        record.check()?;
        if self.get(&record.pattern_id).is_some() {
            return Err(Error::Conflict(record.pattern_id));
        }
        let id = record.pattern_id.clone();
        if let Some(field) = raster {
            let csv_rel = format!("{RASTERS}/{id}.csv");
            let meta_rel = format!("{RASTERS}/{id}.meta.json");
            write_atomic(&self.root.join(&csv_rel), to_csv_string(field).as_bytes())?;
            let meta = serde_json::to_vec_pretty(field.meta())?;
            write_atomic(&self.root.join(&meta_rel), &meta)?;
            record.raster_ref = Some(csv_rel);
        }
        let rel = format!("{RECORDS}/{id}.json");
        let bytes = serde_json::to_vec_pretty(&record)?;
        write_atomic(&self.root.join(&rel), &bytes)?;
        self.entries.push(ManifestEntry {
            pattern_id: id,
            path: rel,
            graph_size: record.graph_size,
            checksum: checksum(&bytes),
        });
        self.records.push(record);
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<()> {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            records: self.entries.clone(),
        };
        write_atomic(&self.root.join(MANIFEST), &serde_json::to_vec_pretty(&manifest)?)
    }

    pub fn stats(&self) -> StoreStats {
        let mut size_histogram = BTreeMap::new();
        for r in &self.records {
            *size_histogram.entry(r.graph_size).or_insert(0) += 1;
        }
        StoreStats {
            count: self.records.len(),
            size_histogram,
        }
    }

    /// Loads the raster stored with a record.
    pub fn load_raster(&self, pattern_id: &str) -> Result<SpeedField> {
        let record = self.get(pattern_id).ok_or_else(|| Error::NotFound(pattern_id.to_string()))?;
        let rel = record
            .raster_ref
            .as_deref()
            .ok_or_else(|| Error::NotFound(format!("raster of `{pattern_id}`")))?;
        let csv = contained(&self.root, rel)?;
        let meta_path = csv.with_extension("meta.json");
        let meta = load_meta(&meta_path)?;
        load_csv(&csv, &meta)
    }
}
