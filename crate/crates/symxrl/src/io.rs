//! File formats: JSONL traces and symbolic traces, the JSON store document,
//! checkpoints, decision logs and CSV tables. Every write goes through a
//! temporary file in the target directory and is renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use symxrl_core::steering::SteeringDecision;
use symxrl_core::store::{ExperienceStore, StoreDocument, StoreError};
use symxrl_core::symbolizer::SymbolicRecord;
use symxrl_core::Step;
use thiserror::Error;

use crate::agent::{Checkpoint, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: corrupt file: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error("{path}: checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    CheckpointVersion { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fs_err(dir))?;
    tmp.write_all(bytes).map_err(fs_err(path))?;
    tmp.as_file().sync_all().map_err(fs_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Fs { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(fs_err(path))
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

/// Reads one JSON value per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(fs_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_trace(path: &Path, steps: &[Step]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(steps).as_bytes())
}

pub fn read_trace(path: &Path) -> Result<Vec<Step>, IoError> {
    read_jsonl(path)
}

pub fn write_symbolic(path: &Path, records: &[SymbolicRecord]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

pub fn read_symbolic(path: &Path) -> Result<Vec<SymbolicRecord>, IoError> {
    read_jsonl(path)
}

pub fn write_decisions(path: &Path, decisions: &[SteeringDecision]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(decisions).as_bytes())
}

pub fn read_decisions(path: &Path) -> Result<Vec<SteeringDecision>, IoError> {
    read_jsonl(path)
}

pub fn save_store(path: &Path, store: &ExperienceStore) -> Result<(), IoError> {
    let mut json = serde_json::to_string(&store.to_document()).expect("serializable store");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn load_store(path: &Path) -> Result<ExperienceStore, IoError> {
    let text = read_to_string(path)?;
    let doc: StoreDocument = serde_json::from_str(&text)
        .map_err(|e| IoError::Corrupt { path: path.to_path_buf(), message: e.to_string() })?;
    ExperienceStore::from_document(doc).map_err(|source| IoError::Store { path: path.to_path_buf(), source })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), IoError> {
    let mut json = serde_json::to_string_pretty(checkpoint).expect("serializable checkpoint");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let text = read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| IoError::Corrupt { path: path.to_path_buf(), message: e.to_string() })?;
    let found = value.get("version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if found != CHECKPOINT_VERSION {
        return Err(IoError::CheckpointVersion { path: path.to_path_buf(), found });
    }
    serde_json::from_value(value).map_err(|e| IoError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

/// Renders a CSV table with a header row.
pub fn csv_table<R, I, S>(header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Shortest round-trippable rendering of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
