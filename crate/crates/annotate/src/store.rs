use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mcgen_core::evalharness::Difficulty;
use mcgen_core::mccreate::Split;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub split: Split,
    pub n: usize,
    pub seed: u64,
    pub instance_ids: Vec<String>,
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub session_id: String,
    pub instance_id: String,
    pub chosen_index: usize,
    pub difficulty: Difficulty,
    pub elapsed_ms: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LogEvent {
    Session(SessionRecord),
    Answer(AnnotationRecord),
}

/// Append-only JSONL log. Each event is one `write` of a full line under a
/// lock, so concurrent appends never interleave.
#[derive(Debug)]
pub struct RecordLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordLog {
    /// Opens (creating if needed) and returns the events already present.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogEvent>)> {
        let path = path.as_ref().to_path_buf();
        let io = |e| Error::Io(path.clone(), e);
        let mut events = Vec::new();
        if path.exists() {
            let r = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in r.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev = serde_json::from_str(&line)
                    .map_err(|e| Error::Log(format!("{} line {}: {e}", path.display(), i + 1)))?;
                events.push(ev);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok((
            RecordLog {
                path,
                file: Mutex::new(file),
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, ev: &LogEvent) -> Result<()> {
        let mut line = serde_json::to_vec(ev).map_err(|e| Error::Log(e.to_string()))?;
        line.push(b'\n');
        let mut f = self.file.lock().expect("log lock poisoned");
        f.write_all(&line).map_err(|e| Error::Io(self.path.clone(), e))?;
        f.flush().map_err(|e| Error::Io(self.path.clone(), e))
    }
}
