//! Feature matrices, record manifests and the `.emb` embedding file format.
//!
//! An `.emb` file is the 4 ASCII bytes `EMB1`, a little-endian `u32` row
//! count `n`, a little-endian `u32` dimension `d`, then `n * d` little-endian
//! IEEE-754 `f32` values in row-major order. Nothing else: the byte length is
//! always exactly `12 + 4 * n * d`.
//!
//! Record metadata lives next to the binary file in a newline-delimited JSON
//! manifest (`feats.emb` pairs with `feats.jsonl`), one record per row in row
//! order.

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid feature set: {0}")]
    InvalidFeatureSet(String),
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("embedding file has trailing bytes: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("embedding set is empty")]
    EmptySet,
    #[error("manifest has {manifest} rows but the embedding file has {rows}")]
    ManifestMismatch { manifest: usize, rows: usize },
    #[error("malformed manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// An `n x d` matrix of embedding vectors with one id and one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    values: Vec<f32>,
    ids: Vec<String>,
    labels: Vec<String>,
}

impl FeatureSet {
    /// Builds a feature set from a row-major value buffer.
    ///
    /// Fails when the buffer length disagrees with `ids.len() * d`, when ids and
    /// labels have different lengths, when an id repeats, or when a value is not
    /// finite.
    pub fn new(d: usize, values: Vec<f32>, ids: Vec<String>, labels: Vec<String>) -> Result<Self> {
        let n = ids.len();
        if d == 0 {
            return Err(DataError::InvalidFeatureSet("dimension must be at least 1".into()));
        }
        if labels.len() != n {
            return Err(DataError::InvalidFeatureSet(format!(
                "{} ids but {} labels",
                n,
                labels.len()
            )));
        }
        if values.len() != n * d {
            return Err(DataError::InvalidFeatureSet(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidFeatureSet(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(DataError::InvalidFeatureSet(format!("duplicate id {id:?}")));
            }
        }
        Ok(Self {
            n,
            d,
            values,
            ids,
            labels,
        })
    }

    /// Feature set whose ids are `row-0`, `row-1`, ... and whose labels are empty.
    pub fn unlabeled(d: usize, values: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(DataError::InvalidFeatureSet("dimension must be at least 1".into()));
        }
        let n = values.len() / d;
        Self::new(d, values, default_ids(n), vec![String::new(); n])
    }

    /// Convenience constructor from 64-bit rows; values are narrowed to `f32`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(DataError::InvalidFeatureSet(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            values.extend(row.iter().map(|&v| v as f32));
        }
        Self::unlabeled(d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Row-major copy of the values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    /// Replaces ids and labels with the ones carried by `manifest`.
    pub fn with_manifest(mut self, manifest: &DatasetManifest) -> Result<Self> {
        if manifest.records.len() != self.n {
            return Err(DataError::ManifestMismatch {
                manifest: manifest.records.len(),
                rows: self.n,
            });
        }
        let ids = manifest.records.iter().map(|r| r.id.clone()).collect();
        let labels = manifest.records.iter().map(|r| r.label.clone()).collect();
        let rebuilt = Self::new(self.d, std::mem::take(&mut self.values), ids, labels)?;
        Ok(rebuilt)
    }

    /// Manifest with one `{id, label}` record per row.
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            records: self
                .ids
                .iter()
                .zip(&self.labels)
                .map(|(id, label)| ManifestRecord::new(id.clone(), label.clone()))
                .collect(),
            provenance: Vec::new(),
        }
    }
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("row-{i}")).collect()
}

/// One dataset entry. Optional fields are filled in by later pipeline stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl ManifestRecord {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            source_path: None,
            cluster: None,
            prompt: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Free-text log of the pipeline steps that produced this manifest.
    pub provenance: Vec<String>,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        Self {
            records,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_step(mut self, step: impl Into<String>) -> Self {
        self.provenance.push(step.into());
        self
    }

    /// Writes the records as JSON lines. A non-empty provenance log goes to a
    /// sibling `<name>.provenance.txt`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut out = BufWriter::new(file);
        for record in &self.records {
            let line = serde_json::to_string(record).expect("manifest record serializes");
            writeln!(out, "{line}").map_err(|e| DataError::io(path, e))?;
        }
        out.flush().map_err(|e| DataError::io(path, e))?;
        let log_path = provenance_path(path);
        if !self.provenance.is_empty() {
            let mut text = self.provenance.join("\n");
            text.push('\n');
            fs::write(&log_path, text).map_err(|e| DataError::io(&log_path, e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| DataError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| DataError::MalformedManifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        let log_path = provenance_path(path);
        let provenance = match fs::read_to_string(&log_path) {
            Ok(text) => text.lines().map(str::to_owned).collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(DataError::io(&log_path, e)),
        };
        Ok(Self {
            records,
            provenance,
        })
    }
}

fn provenance_path(manifest: &Path) -> PathBuf {
    let mut name = manifest
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".provenance.txt");
    manifest.with_file_name(name)
}

/// The manifest path paired with an embedding file: same stem, `.jsonl` extension.
pub fn manifest_path_for(emb_path: &Path) -> PathBuf {
    emb_path.with_extension("jsonl")
}

/// Serializes the binary payload of an `.emb` file.
pub fn encode_embeddings(fs: &FeatureSet) -> Result<Vec<u8>> {
    let n = u32::try_from(fs.n).map_err(|_| DataError::InvalidFeatureSet("too many rows".into()))?;
    let d = u32::try_from(fs.d).map_err(|_| DataError::InvalidFeatureSet("dimension too large".into()))?;
    if fs.values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::InvalidFeatureSet("non-finite value".into()));
    }
    let mut bytes = Vec::with_capacity(EMB_HEADER_LEN + 4 * fs.values.len());
    bytes.extend_from_slice(EMB_MAGIC);
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    for v in &fs.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

/// Parses an `.emb` payload. Ids default to `row-i` and labels to empty strings.
pub fn decode_embeddings(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.len() < EMB_HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != EMB_MAGIC {
            return Err(DataError::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(DataError::TruncatedFile {
            expected: EMB_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != EMB_MAGIC {
        return Err(DataError::BadMagic { found: magic });
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    if n == 0 {
        return Err(DataError::EmptySet);
    }
    if d == 0 {
        return Err(DataError::InvalidFeatureSet("dimension 0 in header".into()));
    }
    let expected = EMB_HEADER_LEN as u64 + 4 * n * d;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(DataError::TruncatedFile { expected, found });
    }
    if found > expected {
        return Err(DataError::TrailingBytes { expected, found });
    }
    let values = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSet::unlabeled(d as usize, values)
}

/// Writes `fs` to `path` and its `{id, label}` manifest next to it.
pub fn save_embeddings(fs: &FeatureSet, path: &Path) -> Result<()> {
    let bytes = encode_embeddings(fs)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))?;
    fs.manifest().write_jsonl(&manifest_path_for(path))
}

/// Reads an `.emb` file, attaching ids and labels from the sibling manifest when
/// one exists.
pub fn load_embeddings(path: &Path) -> Result<FeatureSet> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DataError::io(path, e))?;
    let fs = decode_embeddings(&bytes)?;
    let manifest_path = manifest_path_for(path);
    if manifest_path.exists() {
        let manifest = DatasetManifest::read_jsonl(&manifest_path)?;
        fs.with_manifest(&manifest)
    } else {
        Ok(fs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    DuplicateId { id: String },
    CountMismatch { manifest: usize, features: usize },
    UnknownLabel { id: String, label: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks that manifest ids are unique, that the manifest and the feature set
/// have the same row count, and that every label belongs to `declared_labels`.
pub fn validate_manifest(
    manifest: &DatasetManifest,
    fs: &FeatureSet,
    declared_labels: &BTreeSet<String>,
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for record in &manifest.records {
        if !seen.insert(record.id.as_str()) && reported.insert(record.id.as_str()) {
            issues.push(ValidationIssue::DuplicateId {
                id: record.id.clone(),
            });
        }
    }
    if manifest.records.len() != fs.n() {
        issues.push(ValidationIssue::CountMismatch {
            manifest: manifest.records.len(),
            features: fs.n(),
        });
    }
    for record in &manifest.records {
        if !declared_labels.contains(&record.label) {
            issues.push(ValidationIssue::UnknownLabel {
                id: record.id.clone(),
                label: record.label.clone(),
            });
        }
    }
    ValidationReport { issues }
}
