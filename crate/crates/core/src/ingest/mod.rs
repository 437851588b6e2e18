//! Signature files, protocol lists and synthetic datasets.

mod protocol;
mod signature;
mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use protocol::{format_comparison_list, pair_id_for_line, parse_comparison_list, ComparisonPair, Label, Task};
pub use signature::{format_signature_file, parse_signature_file, Column, ColumnSchema, Delimiter};
pub use synth::{synth_dataset, GENUINE_JITTER, SKILLED_JITTER, SKILLED_WARP};

use crate::signal::SignatureRecord;

pub const PROTOCOL_FILE: &str = "protocol.txt";
pub const SIGNATURES_DIR: &str = "signatures";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid column schema: {0}")]
    InvalidSchema(String),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("file contains no samples")]
    EmptyFile,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("count header declares {declared} samples but {found} follow")]
    CountMismatch { declared: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("pair {pair_id} references unknown signature {path}")]
    MissingRecord { pair_id: String, path: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Records plus the comparisons defined over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Keyed by the path used in the protocol file.
    pub records: BTreeMap<String, SignatureRecord>,
    pub pairs: Vec<ComparisonPair>,
    pub task_counts: BTreeMap<Task, usize>,
}

impl Dataset {
    /// Check that every pair resolves, fill in tasks left open by the
    /// protocol file and count pairs per task.
    pub fn assemble(records: BTreeMap<String, SignatureRecord>, mut pairs: Vec<ComparisonPair>) -> Result<Dataset, IngestError> {
        let mut task_counts = BTreeMap::new();
        for pair in &mut pairs {
            let kind = |path: &str| {
                records.get(path).map(|r| r.input_kind).ok_or_else(|| IngestError::MissingRecord {
                    pair_id: pair.pair_id.clone(),
                    path: path.to_string(),
                })
            };
            let a = kind(&pair.reference_path)?;
            let b = kind(&pair.probe_path)?;
            let task = *pair.task.get_or_insert(Task::from_kinds(a, b));
            *task_counts.entry(task).or_insert(0) += 1;
        }
        Ok(Dataset {
            records,
            pairs,
            task_counts,
        })
    }

    /// Load a protocol file and every signature it references.
    ///
    /// Per-file failures are collected; the error lists all of them.
    pub fn load(protocol: &Path, signatures_dir: &Path, schema: &ColumnSchema) -> Result<Dataset, Vec<IngestError>> {
        let bytes = std::fs::read(protocol).map_err(|e| vec![IngestError::io(protocol, e)])?;
        let pairs = parse_comparison_list(&bytes).map_err(|e| {
            vec![IngestError::File {
                path: protocol.display().to_string(),
                source: Box::new(e),
            }]
        })?;
        let (records, errors) = load_records(referenced_paths(&pairs), signatures_dir, schema);
        if !errors.is_empty() {
            return Err(errors);
        }
        Dataset::assemble(records, pairs).map_err(|e| vec![e])
    }

    /// Write `signatures/<name>` files and `protocol.txt` under `dir`.
    pub fn write(&self, dir: &Path, schema: &ColumnSchema) -> Result<(), IngestError> {
        let sig_dir = dir.join(SIGNATURES_DIR);
        std::fs::create_dir_all(&sig_dir).map_err(|e| IngestError::io(&sig_dir, e))?;
        for (name, record) in &self.records {
            let path = sig_dir.join(name);
            std::fs::write(&path, format_signature_file(record, schema)).map_err(|e| IngestError::io(&path, e))?;
        }
        let path = dir.join(PROTOCOL_FILE);
        std::fs::write(&path, format_comparison_list(&self.pairs)).map_err(|e| IngestError::io(&path, e))
    }

    pub fn pair_counts_by_label(&self) -> BTreeMap<Label, usize> {
        let mut out = BTreeMap::new();
        for p in &self.pairs {
            *out.entry(p.label).or_insert(0) += 1;
        }
        out
    }
}

/// Distinct signature paths referenced by `pairs`, in first-use order.
pub fn referenced_paths(pairs: &[ComparisonPair]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for p in pairs {
        for path in [&p.reference_path, &p.probe_path] {
            if seen.insert(path.clone()) {
                out.push(path.clone());
            }
        }
    }
    out
}

/// Read and parse one signature file, tagging the record with its path
/// and a subject id taken from the file name up to the first `_`.
pub fn load_signature(dir: &Path, name: &str, schema: &ColumnSchema) -> Result<SignatureRecord, IngestError> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| IngestError::io(&path, e))?;
    let mut record = parse_signature_file(&bytes, schema).map_err(|e| IngestError::File {
        path: name.to_string(),
        source: Box::new(e),
    })?;
    let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    record.subject_id = stem.split('_').next().unwrap_or(stem).to_string();
    record.source_path = name.to_string();
    Ok(record)
}

pub fn load_records(
    names: impl IntoIterator<Item = String>,
    dir: &Path,
    schema: &ColumnSchema,
) -> (BTreeMap<String, SignatureRecord>, Vec<IngestError>) {
    let mut records = BTreeMap::new();
    let mut errors = Vec::new();
    for name in names {
        match load_signature(dir, &name, schema) {
            Ok(r) => {
                records.insert(name, r);
            }
            Err(e) => errors.push(e),
        }
    }
    (records, errors)
}
