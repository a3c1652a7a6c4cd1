//! JSONL session transcripts: one request/response pair per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("transcript has no entry for record {0}")]
    MissingRecord(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub timestamp_ms: u64,
    pub record_id: String,
    pub endpoint: String,
    pub request: Value,
    /// Assistant text on success.
    pub response: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
}

impl TranscriptEntry {
    pub fn now(record_id: &str, endpoint: &str, request: Value) -> Self {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            timestamp_ms,
            record_id: record_id.to_string(),
            endpoint: endpoint.to_string(),
            request,
            response: None,
            error: None,
            attempts: 0,
        }
    }
}

/// Appends entries; safe to share across worker threads.
pub struct TranscriptWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptWriter {
    pub fn append_to(path: &Path) -> Result<Self, TranscriptError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| TranscriptError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn write(&self, entry: &TranscriptEntry) -> Result<(), TranscriptError> {
        let line = serde_json::to_string(entry).expect("entry serializes");
        let mut file = self.file.lock().expect("transcript lock poisoned");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|source| TranscriptError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Recorded responses keyed by record id; the last entry for an id wins.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    entries: HashMap<String, TranscriptEntry>,
}

impl Replay {
    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let file = File::open(path).map_err(|source| TranscriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| TranscriptError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| TranscriptError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.insert(entry.record_id.clone(), entry);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, record_id: &str) -> Result<&TranscriptEntry, TranscriptError> {
        self.entries
            .get(record_id)
            .ok_or_else(|| TranscriptError::MissingRecord(record_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn write_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let w = TranscriptWriter::append_to(&path).unwrap();
        let mut a = TranscriptEntry::now("r1", "http://x", json!({"model": "m"}));
        a.response = Some("first".into());
        a.attempts = 1;
        w.write(&a).unwrap();
        let mut b = a.clone();
        b.response = Some("second".into());
        w.write(&b).unwrap();
        let mut c = TranscriptEntry::now("r2", "http://x", json!({}));
        c.error = Some("boom".into());
        w.write(&c).unwrap();

        let replay = Replay::load(&path).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(
            replay.get("r1").unwrap().response.as_deref(),
            Some("second")
        );
        assert_eq!(replay.get("r2").unwrap().error.as_deref(), Some("boom"));
        assert!(matches!(
            replay.get("r3"),
            Err(TranscriptError::MissingRecord(_))
        ));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }

    #[test]
    fn malformed_line_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "\n{not json}\n").unwrap();
        match Replay::load(&path) {
            Err(TranscriptError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
