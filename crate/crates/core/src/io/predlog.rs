//! Prediction logs (ensemble confidences) and correctness logs (candidates).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{from_record_line, locate, open_lines, to_record_line};
use crate::difficulty::{EnsembleManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::types::{ConfidenceMatrix, CorrectnessMatrix};

/// One line of an ensemble prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLogLine {
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ManifestEntry>,
    pub instance_id: String,
    pub gold_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// When set, every run id must belong to the manifest and the matrix has
    /// one row per manifest entry.
    pub manifest: Option<EnsembleManifest>,
    /// Strict readers reject gaps; lenient readers mask them.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    pub confidences: ConfidenceMatrix,
    /// Present when every line carries `correct` and there are no gaps.
    pub correctness: Option<CorrectnessMatrix>,
    /// Number of (run, instance) cells absent from the log.
    pub masked_entries: usize,
}

fn nonempty_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(String, String)>> {
    reader.lines().enumerate().filter_map(|(n, line)| {
        let location = format!("line {}", n + 1);
        match line {
            Err(e) => Some(Err(Error::parse(location, e.to_string()))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((location, l))),
        }
    })
}

pub fn parse_prediction_log(reader: impl BufRead, opts: &ReadOptions) -> Result<PredictionLog> {
    let manifest_runs: Option<HashMap<String, ManifestEntry>> = opts
        .manifest
        .as_ref()
        .map(|m| m.entries().iter().map(|e| (e.run_id(), *e)).collect());

    let mut cells: BTreeMap<(String, String), (f64, Option<bool>)> = BTreeMap::new();
    let mut runs = BTreeSet::new();
    let mut instances = BTreeSet::new();
    for item in nonempty_lines(reader) {
        let (location, text) = item?;
        let line: PredictionLogLine = from_record_line(&text, &location)?;
        if line.run_id.is_empty() || line.instance_id.is_empty() {
            return Err(Error::parse(&location, "run_id and instance_id must be non-empty"));
        }
        if !(0.0..=1.0).contains(&line.gold_confidence) {
            return Err(Error::parse(
                &location,
                format!("field gold_confidence = {} is outside [0,1]", line.gold_confidence),
            ));
        }
        if let Some(runs) = &manifest_runs {
            match runs.get(&line.run_id) {
                None => {
                    return Err(Error::parse(
                        &location,
                        format!("run {:?} is not in the manifest", line.run_id),
                    ))
                }
                Some(entry) if line.config.is_some_and(|c| c != *entry) => {
                    return Err(Error::parse(
                        &location,
                        format!("config does not match manifest entry {:?}", line.run_id),
                    ));
                }
                Some(_) => {}
            }
        }
        runs.insert(line.run_id.clone());
        instances.insert(line.instance_id.clone());
        let key = (line.run_id, line.instance_id);
        if cells.contains_key(&key) {
            return Err(Error::Duplicate {
                location,
                message: format!("run {:?} already has a prediction for {:?}", key.0, key.1),
            });
        }
        cells.insert(key, (line.gold_confidence, line.correct));
    }
    if cells.is_empty() {
        return Err(Error::parse("line 1", "prediction log is empty"));
    }

    let model_ids: Vec<String> = match &manifest_runs {
        Some(m) => {
            let mut ids: Vec<String> = m.keys().cloned().collect();
            ids.sort();
            ids
        }
        None => runs.into_iter().collect(),
    };
    let instance_ids: Vec<String> = instances.into_iter().collect();

    let mut values = Vec::with_capacity(model_ids.len() * instance_ids.len());
    let mut mask = Vec::with_capacity(values.capacity());
    let mut correct = Vec::with_capacity(values.capacity());
    let mut gaps = BTreeSet::new();
    for run in &model_ids {
        for inst in &instance_ids {
            match cells.get(&(run.clone(), inst.clone())) {
                Some(&(c, ok)) => {
                    values.push(c);
                    mask.push(true);
                    correct.push(ok);
                }
                None => {
                    values.push(0.0);
                    mask.push(false);
                    correct.push(None);
                    gaps.insert(inst.clone());
                }
            }
        }
    }
    let masked_entries = mask.iter().filter(|p| !**p).count();
    if opts.strict && masked_entries > 0 {
        return Err(Error::MissingPredictions {
            instance_ids: gaps.into_iter().collect(),
        });
    }
    let correctness = if correct.iter().all(Option::is_some) {
        let flat = correct.into_iter().map(Option::unwrap).collect();
        Some(CorrectnessMatrix::new(model_ids.clone(), instance_ids.clone(), flat)?)
    } else {
        None
    };
    let confidences = ConfidenceMatrix::new(model_ids, instance_ids, values, Some(mask))?;
    Ok(PredictionLog {
        confidences,
        correctness,
        masked_entries,
    })
}

pub fn read_prediction_log(path: &Path, opts: &ReadOptions) -> Result<PredictionLog> {
    parse_prediction_log(open_lines(path)?, opts).map_err(|e| locate(e, path))
}

/// Log lines for every present cell, attaching manifest configs when given.
pub fn prediction_log_lines(conf: &ConfidenceMatrix, manifest: Option<&EnsembleManifest>) -> Vec<PredictionLogLine> {
    let configs: HashMap<String, ManifestEntry> = manifest
        .map(|m| m.entries().iter().map(|e| (e.run_id(), *e)).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (m, run) in conf.model_ids().iter().enumerate() {
        for (i, inst) in conf.instance_ids().iter().enumerate() {
            if let Some(c) = conf.get(m, i) {
                out.push(PredictionLogLine {
                    run_id: run.clone(),
                    config: configs.get(run).copied(),
                    instance_id: inst.clone(),
                    gold_confidence: c,
                    predicted_label: None,
                    correct: None,
                });
            }
        }
    }
    out
}

pub fn write_prediction_log(lines: &[PredictionLogLine], mut out: impl Write) -> Result<()> {
    for line in lines {
        writeln!(out, "{}", to_record_line(line)?).map_err(|e| Error::io("<prediction log>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrectnessLine {
    candidate_id: String,
    instance_id: String,
    correct: bool,
}

/// Canonical JSONL lines (without newlines) for a correctness matrix.
pub fn correctness_log_lines(v: &CorrectnessMatrix) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(v.n_candidates() * v.n_instances());
    for (cand, row) in v.rows() {
        for (inst, &correct) in v.instance_ids().iter().zip(row) {
            out.push(to_record_line(&CorrectnessLine {
                candidate_id: cand.to_string(),
                instance_id: inst.clone(),
                correct,
            })?);
        }
    }
    Ok(out)
}

/// Reads a complete candidate × instance correctness log. Candidates keep
/// their order of first appearance.
pub fn parse_correctness_log(reader: impl BufRead) -> Result<CorrectnessMatrix> {
    let mut candidates: Vec<String> = Vec::new();
    let mut instances = BTreeSet::new();
    let mut cells: HashMap<(String, String), bool> = HashMap::new();
    for item in nonempty_lines(reader) {
        let (location, text) = item?;
        let line: CorrectnessLine = from_record_line(&text, &location)?;
        if !candidates.contains(&line.candidate_id) {
            candidates.push(line.candidate_id.clone());
        }
        instances.insert(line.instance_id.clone());
        if cells
            .insert((line.candidate_id.clone(), line.instance_id.clone()), line.correct)
            .is_some()
        {
            return Err(Error::Duplicate {
                location,
                message: format!(
                    "candidate {:?} already has a result for {:?}",
                    line.candidate_id, line.instance_id
                ),
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::parse("line 1", "correctness log is empty"));
    }
    let instance_ids: Vec<String> = instances.into_iter().collect();
    let mut flat = Vec::with_capacity(candidates.len() * instance_ids.len());
    let mut gaps = BTreeSet::new();
    for c in &candidates {
        for i in &instance_ids {
            match cells.get(&(c.clone(), i.clone())) {
                Some(&ok) => flat.push(ok),
                None => {
                    gaps.insert(i.clone());
                    flat.push(false);
                }
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingPredictions {
            instance_ids: gaps.into_iter().collect(),
        });
    }
    CorrectnessMatrix::new(candidates, instance_ids, flat)
}

pub fn read_correctness_log(path: &Path) -> Result<CorrectnessMatrix> {
    parse_correctness_log(open_lines(path)?).map_err(|e| locate(e, path))
}
