//! File formats.
//!
//! * Structured documents (manifests, plans, flag sets, reports) are JSON
//!   with sorted keys, two-space indentation and floats in fixed notation,
//!   so a given value always serializes to the same bytes.
//! * Record streams (prediction logs, instance metadata, the edit log) are
//!   newline-delimited JSON, one compact record per line.
//! * Difficulty exports are CSV with six-decimal scores.
//!
//! Every document and record carries `format_version` (currently 1). Readers
//! accept records without it and reject any other version.

mod canonical;
mod csv;
mod editlog;
mod predlog;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub use self::csv::{
    read_difficulty_csv, read_ood_accuracies, write_difficulty_csv, write_ood_accuracies, write_sweep_csv, CsvOrder,
    DIFFICULTY_HEADER, SCORE_DECIMALS, SWEEP_HEADER,
};
pub use canonical::{format_float, to_canonical_compact, to_canonical_pretty};
pub use editlog::{read_edit_log, recover_edit_log, DecisionRecord, EditLogEntry, EditLogWriter};
pub use predlog::{
    correctness_log_lines, parse_correctness_log, parse_prediction_log, prediction_log_lines, read_correctness_log,
    read_prediction_log, write_prediction_log, PredictionLog, PredictionLogLine, ReadOptions,
};

use crate::error::{Error, Result};
use crate::types::{InstanceRecord, InstanceSet};

pub const FORMAT_VERSION: u64 = 1;

fn with_envelope(kind: Option<&str>, value: &impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Invalid(format!("cannot serialize: {e}")))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Invalid("only objects can be written as documents".into()))?;
    obj.insert("format_version".into(), Value::from(FORMAT_VERSION));
    if let Some(kind) = kind {
        obj.insert("kind".into(), Value::from(kind));
    }
    Ok(v)
}

fn strip_envelope(mut v: Value, kind: Option<&str>, location: &str) -> Result<Value> {
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::parse(location, "expected a JSON object"))?;
    match obj.remove("format_version") {
        None => {}
        Some(Value::Number(n)) if n.as_u64() == Some(FORMAT_VERSION) => {}
        Some(other) => {
            return Err(Error::parse(location, format!("unsupported format_version {other}")));
        }
    }
    if let Some(kind) = kind {
        match obj.remove("kind") {
            Some(Value::String(k)) if k == kind => {}
            Some(other) => return Err(Error::parse(location, format!("expected kind {kind:?}, found {other}"))),
            None => return Err(Error::parse(location, format!("missing kind (expected {kind:?})"))),
        }
    }
    Ok(v)
}

/// Serializes `value` as a canonical, versioned document of the given kind.
pub fn to_document(kind: &str, value: &impl Serialize) -> Result<String> {
    let mut out = to_canonical_pretty(&with_envelope(Some(kind), value)?);
    out.push('\n');
    Ok(out)
}

pub fn from_document<T: DeserializeOwned>(kind: &str, text: &str, location: &str) -> Result<T> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
    let v = strip_envelope(v, Some(kind), location)?;
    serde_json::from_value(v).map_err(|e| Error::parse(location, e.to_string()))
}

pub fn write_document(path: &Path, kind: &str, value: &impl Serialize) -> Result<()> {
    write_file(path, to_document(kind, value)?.as_bytes())
}

pub fn read_document<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_document(kind, &text, &path.display().to_string())
}

/// One canonical JSONL record, without the trailing newline.
pub fn to_record_line(value: &impl Serialize) -> Result<String> {
    Ok(to_canonical_compact(&with_envelope(None, value)?))
}

pub fn from_record_line<T: DeserializeOwned>(line: &str, location: &str) -> Result<T> {
    let v: Value = serde_json::from_str(line).map_err(|e| Error::parse(location, e.to_string()))?;
    let v = strip_envelope(v, None, location)?;
    serde_json::from_value(v).map_err(|e| Error::parse(location, e.to_string()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn open_lines(path: &Path) -> Result<impl BufRead> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file))
}

pub fn write_instances(records: &[InstanceRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        writeln!(out, "{}", to_record_line(r)?).map_err(|e| Error::io("<instances>", e))?;
    }
    Ok(())
}

pub fn parse_instances(reader: impl BufRead) -> Result<InstanceSet> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let location = format!("line {}", n + 1);
        let line = line.map_err(|e| Error::parse(&location, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(from_record_line::<InstanceRecord>(&line, &location)?);
    }
    InstanceSet::new(records)
}

pub fn read_instances(path: &Path) -> Result<InstanceSet> {
    parse_instances(open_lines(path)?).map_err(|e| locate(e, path))
}

/// Prefixes parse locations with the file path.
pub(crate) fn locate(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        Error::Duplicate { location, message } => Error::Duplicate {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    }
}
