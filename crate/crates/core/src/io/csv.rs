//! CSV exports: difficulty scores and per-candidate OOD accuracies.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sweep::SweepReport;
use crate::types::DifficultyVector;

pub const DIFFICULTY_HEADER: [&str; 3] = ["instance_id", "difficulty", "n_models"];
pub const SCORE_DECIMALS: usize = 6;

/// How a reader treats rows that are not in lexicographic id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvOrder {
    /// Out-of-order rows are a parse error.
    #[default]
    Strict,
    /// Rows are reordered.
    Lenient,
}

pub fn write_difficulty_csv(d: &DifficultyVector, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io_err = |e: csv::Error| Error::Invalid(format!("cannot write difficulty CSV: {e}"));
    w.write_record(DIFFICULTY_HEADER).map_err(io_err)?;
    for ((id, score), n) in d.iter().zip(d.n_models()) {
        w.write_record([id, &format!("{score:.SCORE_DECIMALS$}"), &n.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("<difficulty csv>", e))
}

pub fn read_difficulty_csv(input: impl Read, order: CsvOrder) -> Result<DifficultyVector> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::parse("line 1", e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != DIFFICULTY_HEADER {
        return Err(Error::parse(
            "line 1",
            format!(
                "expected header {:?}, found {:?}",
                DIFFICULTY_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let (mut ids, mut scores, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in r.records().enumerate() {
        let location = format!("line {}", row + 2);
        let record = record.map_err(|e| Error::parse(&location, e.to_string()))?;
        if record.len() != 3 {
            return Err(Error::parse(
                &location,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(&location, "empty instance_id"));
        }
        let score: f64 = record[1]
            .parse()
            .map_err(|_| Error::parse(&location, format!("difficulty {:?} is not a number", &record[1])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(&location, format!("difficulty {score} is outside [0,1]")));
        }
        let n: u32 = record[2]
            .parse()
            .map_err(|_| Error::parse(&location, format!("n_models {:?} is not a count", &record[2])))?;
        if let Some(prev) = ids.last() {
            if &id == prev || ids.contains(&id) {
                return Err(Error::Duplicate {
                    location,
                    message: format!("instance {id:?} appears twice"),
                });
            }
            if order == CsvOrder::Strict && &id < prev {
                return Err(Error::parse(
                    &location,
                    format!("instance {id:?} is out of lexicographic order"),
                ));
            }
        }
        ids.push(id);
        scores.push(score);
        counts.push(n);
    }
    DifficultyVector::new(ids, scores, counts)
}

/// Two columns, `candidate_id,accuracy`.
pub fn read_ood_accuracies(input: impl Read) -> Result<BTreeMap<String, f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::parse("line 1", e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["candidate_id", "accuracy"] {
        return Err(Error::parse("line 1", "expected header candidate_id,accuracy"));
    }
    let mut out = BTreeMap::new();
    for (row, record) in r.records().enumerate() {
        let location = format!("line {}", row + 2);
        let record = record.map_err(|e| Error::parse(&location, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::parse(&location, "expected 2 fields"));
        }
        let acc: f64 = record[1]
            .parse()
            .ok()
            .filter(|a| (0.0..=1.0).contains(a))
            .ok_or_else(|| Error::parse(&location, format!("accuracy {:?} is not in [0,1]", &record[1])))?;
        if out.insert(record[0].to_string(), acc).is_some() {
            return Err(Error::Duplicate {
                location,
                message: format!("candidate {:?} appears twice", &record[0]),
            });
        }
    }
    Ok(out)
}

pub fn write_ood_accuracies(acc: &BTreeMap<String, f64>, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| Error::Invalid(format!("cannot write accuracy CSV: {e}"));
    w.write_record(["candidate_id", "accuracy"]).map_err(err)?;
    for (id, a) in acc {
        w.write_record([id.as_str(), &format!("{a:.SCORE_DECIMALS$}")])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<accuracy csv>", e))
}

pub const SWEEP_HEADER: [&str; 7] = [
    "policy",
    "percentage",
    "budget",
    "n_valid",
    "n_degenerate",
    "mean_tau",
    "std_tau",
];

/// Plot-ready fidelity-vs-budget table, one row per sweep cell. Cells with
/// no valid replicate leave the tau columns empty.
pub fn write_sweep_csv(report: &SweepReport, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| Error::Invalid(format!("cannot write sweep CSV: {e}"));
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.SCORE_DECIMALS$}")).unwrap_or_default();
    w.write_record(SWEEP_HEADER).map_err(err)?;
    for c in &report.cells {
        let valid = c.taus.len() - c.n_degenerate;
        w.write_record([
            c.policy.as_str().to_string(),
            super::format_float(c.percentage),
            c.budget.to_string(),
            valid.to_string(),
            c.n_degenerate.to_string(),
            opt(c.mean_tau),
            opt(c.std_tau),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))
}
