//! Append-only edit log.
//!
//! Each line is either a proposed edit or a later decision on one. Entry ids
//! are strictly increasing across the whole log, so replaying the lines in
//! order rebuilds the curation state exactly.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{from_record_line, to_record_line};
use crate::curation::{EditRecord, EditStatus};
use crate::error::{Error, Result};

/// Accept or reject decision on an earlier edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRecord {
    pub edit_id: u64,
    pub target_edit_id: u64,
    pub status: EditStatus,
    pub author: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum EditLogEntry {
    Edit(EditRecord),
    Decision(DecisionRecord),
}

impl EditLogEntry {
    pub fn edit_id(&self) -> u64 {
        match self {
            EditLogEntry::Edit(e) => e.edit_id,
            EditLogEntry::Decision(d) => d.edit_id,
        }
    }
}

struct Scan {
    entries: Vec<EditLogEntry>,
    /// Byte length of the intact prefix.
    valid_len: usize,
    failure: Option<Error>,
}

fn scan(bytes: &[u8]) -> Scan {
    let mut entries: Vec<EditLogEntry> = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    let fail = |line: usize, message: String, n: usize| Error::Integrity {
        line,
        message,
        recoverable_entries: n,
    };
    while offset < bytes.len() {
        line_no += 1;
        let (raw, next, terminated) = match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => (&bytes[offset..offset + p], offset + p + 1, true),
            None => (&bytes[offset..], bytes.len(), false),
        };
        let text = match std::str::from_utf8(raw) {
            Ok(t) => t,
            Err(_) => {
                let failure = fail(line_no, "line is not valid UTF-8".into(), entries.len());
                return Scan {
                    valid_len: offset,
                    entries,
                    failure: Some(failure),
                };
            }
        };
        if text.trim().is_empty() {
            offset = next;
            continue;
        }
        let parsed = from_record_line::<EditLogEntry>(text, &format!("line {line_no}"));
        let entry = match parsed {
            Ok(e) if terminated => e,
            Ok(_) => {
                let failure = fail(line_no, "last line is not newline-terminated".into(), entries.len());
                return Scan {
                    valid_len: offset,
                    entries,
                    failure: Some(failure),
                };
            }
            Err(e) => {
                let what = if terminated {
                    "malformed entry"
                } else {
                    "truncated entry"
                };
                let failure = fail(line_no, format!("{what}: {e}"), entries.len());
                return Scan {
                    valid_len: offset,
                    entries,
                    failure: Some(failure),
                };
            }
        };
        if let Some(prev) = entries.last() {
            if entry.edit_id() <= prev.edit_id() {
                let failure = fail(
                    line_no,
                    format!("edit_id {} does not increase past {}", entry.edit_id(), prev.edit_id()),
                    entries.len(),
                );
                return Scan {
                    valid_len: offset,
                    entries,
                    failure: Some(failure),
                };
            }
        }
        if let EditLogEntry::Decision(d) = &entry {
            let known = entries
                .iter()
                .any(|e| matches!(e, EditLogEntry::Edit(r) if r.edit_id == d.target_edit_id));
            if !known {
                let failure = fail(
                    line_no,
                    format!("decision targets unknown edit {}", d.target_edit_id),
                    entries.len(),
                );
                return Scan {
                    valid_len: offset,
                    entries,
                    failure: Some(failure),
                };
            }
        }
        entries.push(entry);
        offset = next;
    }
    Scan {
        entries,
        valid_len: offset,
        failure: None,
    }
}

/// Parses a whole log; any damage is an [`Error::Integrity`].
pub fn read_edit_log(path: &Path) -> Result<Vec<EditLogEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let scan = scan(&bytes);
    match scan.failure {
        Some(e) => Err(e),
        None => Ok(scan.entries),
    }
}

/// Truncates a damaged log to its intact prefix and returns that prefix.
pub fn recover_edit_log(path: &Path) -> Result<Vec<EditLogEntry>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let scan = scan(&bytes);
    if scan.failure.is_some() {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.set_len(scan.valid_len as u64).map_err(|e| Error::io(path, e))?;
        file.sync_all().map_err(|e| Error::io(path, e))?;
    }
    Ok(scan.entries)
}

/// Exclusive appender. Holds an advisory lock on the file for its lifetime.
#[derive(Debug)]
pub struct EditLogWriter {
    path: PathBuf,
    file: File,
    last_id: u64,
}

impl EditLogWriter {
    /// Opens (creating if needed) and replays the log, returning the writer
    /// and the existing entries.
    pub fn open(path: &Path) -> Result<(Self, Vec<EditLogEntry>)> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => {
                return Err(Error::Curation(format!("{} is held by another writer", path.display())));
            }
            Err(fs::TryLockError::Error(e)) => return Err(Error::io(path, e)),
        }
        let entries = read_edit_log(path)?;
        let last_id = entries.last().map_or(0, EditLogEntry::edit_id);
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                last_id,
            },
            entries,
        ))
    }

    /// Id the next appended entry must carry.
    pub fn next_id(&self) -> u64 {
        self.last_id + 1
    }

    /// Appends one entry and syncs it to disk before returning.
    pub fn append(&mut self, entry: &EditLogEntry) -> Result<()> {
        if entry.edit_id() <= self.last_id {
            return Err(Error::Curation(format!(
                "edit_id {} does not increase past {}",
                entry.edit_id(),
                self.last_id
            )));
        }
        let mut line = to_record_line(entry)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        self.last_id = entry.edit_id();
        Ok(())
    }
}
