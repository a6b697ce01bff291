//! Append-only session logs and dataset files.
//!
//! ```text
//! <dir>/datasets/<id>.csv    canonical CSV of the upload
//! <dir>/datasets/<id>.json   {"dataset_id", "name"}
//! <dir>/sessions/<id>.jsonl  one event per line
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::api::CreateSessionRequest;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

impl StoreError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }

    pub fn corrupt(path: &Path, message: impl Into<String>) -> Self {
        Self::Corrupt { path: path.to_owned(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created(CreateSessionRequest),
    /// `(dataset record index, label)` pairs.
    Labels {
        revision: u64,
        labels: Vec<(usize, u8)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dataset_id: String,
    pub name: String,
}

#[derive(Debug)]
pub struct EventLog {
    file: File,
}

impl EventLog {
    /// Creates a new log whose first line is `first`.
    pub fn create(path: &Path, first: &Event) -> io::Result<Self> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        let mut log = Self { file };
        log.append(first)?;
        Ok(log)
    }

    pub fn open_append(path: &Path) -> io::Result<Self> {
        Ok(Self { file: OpenOptions::new().append(true).open(path)? })
    }

    /// Writes one line and syncs it to disk.
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

/// Reads every complete event. A torn final line (a crash mid-append) is
/// dropped and truncated away.
pub fn read_log(path: &Path) -> Result<Vec<Event>, StoreError> {
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut torn = false;
    for line in BufReader::new(file).split(b'\n') {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if torn {
            return Err(StoreError::corrupt(path, "unreadable event before the last line"));
        }
        match serde_json::from_slice::<Event>(&line) {
            Ok(ev) => {
                events.push(ev);
                good_len += line.len() as u64 + 1;
            }
            Err(_) => torn = true,
        }
    }
    if torn {
        let f = OpenOptions::new().write(true).open(path).map_err(|e| StoreError::io(path, e))?;
        f.set_len(good_len).map_err(|e| StoreError::io(path, e))?;
    }
    Ok(events)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub struct Layout {
    pub datasets: PathBuf,
    pub sessions: PathBuf,
}

impl Layout {
    pub fn create(root: &Path) -> Result<Self, StoreError> {
        let layout = Self { datasets: root.join("datasets"), sessions: root.join("sessions") };
        for dir in [&layout.datasets, &layout.sessions] {
            fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        }
        Ok(layout)
    }

    pub fn dataset_csv(&self, id: &str) -> PathBuf {
        self.datasets.join(format!("{id}.csv"))
    }

    pub fn dataset_meta(&self, id: &str) -> PathBuf {
        self.datasets.join(format!("{id}.json"))
    }

    pub fn session_log(&self, id: &str) -> PathBuf {
        self.sessions.join(format!("{id}.jsonl"))
    }

    /// File stems in `dir` with the given extension, sorted.
    pub fn stems(dir: &Path, ext: &str) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| StoreError::io(dir, e))? {
            let path = entry.map_err(|e| StoreError::io(dir, e))?.path();
            if path.extension().is_some_and(|e| e == ext) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(stem.to_owned());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}
