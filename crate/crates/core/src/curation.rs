//! Flagging of trivial and suspicious instances, and the edit model used to
//! repair them.
//!
//! The lowest-scoring instances are candidates for hardening: a curator
//! rewrites them without changing the label until the target predictor gets
//! them wrong. The highest-scoring ones are reviewed for annotation errors
//! and repaired by changing text, label, or both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::types::{CorrectnessMatrix, DifficultyVector, InstanceRecord, TextField};

pub const DEFAULT_FLAG_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    Trivial,
    Erroneous,
}

impl std::str::FromStr for FlagKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(FlagKind::Trivial),
            "erroneous" => Ok(FlagKind::Erroneous),
            other => Err(Error::Invalid(format!(
                "unknown flag kind {other:?} (expected trivial or erroneous)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagSet {
    /// Easiest first.
    pub trivial_ids: Vec<String>,
    /// Hardest first.
    pub erroneous_candidate_ids: Vec<String>,
    pub k_low: usize,
    pub k_high: usize,
    /// Scores of the flagged instances at flagging time.
    pub scores: BTreeMap<String, f64>,
}

impl FlagSet {
    pub fn ids(&self, kind: FlagKind) -> &[String] {
        match kind {
            FlagKind::Trivial => &self.trivial_ids,
            FlagKind::Erroneous => &self.erroneous_candidate_ids,
        }
    }

    pub fn kind_of(&self, instance_id: &str) -> Option<FlagKind> {
        if self.trivial_ids.iter().any(|i| i == instance_id) {
            Some(FlagKind::Trivial)
        } else if self.erroneous_candidate_ids.iter().any(|i| i == instance_id) {
            Some(FlagKind::Erroneous)
        } else {
            None
        }
    }
}

/// Flags the `k_low` easiest and `k_high` hardest instances.
///
/// Instances are ordered by `(score, instance_id)`; trivial flags are taken
/// from the front and erroneous candidates from the back, so the two lists
/// never overlap.
pub fn flag_instances(d: &DifficultyVector, k_low: usize, k_high: usize) -> Result<FlagSet> {
    if k_low + k_high > d.len() {
        return Err(Error::Curation(format!(
            "cannot flag {k_low} + {k_high} instances out of {}",
            d.len()
        )));
    }
    let mut order: Vec<(&str, f64)> = d.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));

    let trivial: Vec<String> = order[..k_low].iter().map(|(id, _)| id.to_string()).collect();
    let erroneous: Vec<String> = order[order.len() - k_high..]
        .iter()
        .rev()
        .map(|(id, _)| id.to_string())
        .collect();
    let scores = order[..k_low]
        .iter()
        .chain(&order[order.len() - k_high..])
        .map(|(id, s)| (id.to_string(), *s))
        .collect();
    Ok(FlagSet {
        trivial_ids: trivial,
        erroneous_candidate_ids: erroneous,
        k_low,
        k_high,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    /// Label-preserving rewrite of a trivial instance.
    TrivialHardening,
    /// Fix of a mislabeled or ill-posed instance.
    ErrorRepair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditStatus {
    Proposed,
    Accepted,
    Rejected,
}

/// What the target predictor said about the edited instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub predicted_label: String,
    pub confidence: f64,
    /// The prediction disagrees with the stored gold label.
    pub flipped: bool,
}

impl Verdict {
    pub fn new(predicted_label: impl Into<String>, confidence: f64, gold_label: &str) -> Self {
        let predicted_label = predicted_label.into();
        let flipped = predicted_label != gold_label;
        Self {
            predicted_label,
            confidence,
            flipped,
        }
    }
}

/// Fields an edit actually changes; unchanged fields are `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangedFields {
    pub text_fields: Option<Vec<TextField>>,
    pub gold_label: Option<String>,
}

impl ChangedFields {
    /// Keeps only proposals that differ from `original`. Text that differs
    /// only in whitespace counts as unchanged.
    pub fn diff(original: &InstanceRecord, text_fields: Option<Vec<TextField>>, gold_label: Option<String>) -> Self {
        let text_fields = text_fields.filter(|t| !same_text(t, &original.text_fields));
        let gold_label = gold_label.filter(|l| *l != original.gold_label);
        Self {
            text_fields,
            gold_label,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text_fields.is_none() && self.gold_label.is_none()
    }
}

fn same_text(a: &[TextField], b: &[TextField]) -> bool {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.name == y.name && norm(&x.text) == norm(&y.text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRecord {
    pub edit_id: u64,
    pub instance_id: String,
    pub edit_kind: EditKind,
    pub changes: ChangedFields,
    /// Gold label of the instance before this edit.
    pub previous_gold_label: String,
    pub author: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub predictor_verdict: Option<Verdict>,
    pub status: EditStatus,
    /// 1-based count of edits proposed for this instance so far.
    pub attempt: u32,
    pub rationale: Option<String>,
}

impl EditRecord {
    pub fn changes_label(&self) -> bool {
        self.changes
            .gold_label
            .as_ref()
            .is_some_and(|l| *l != self.previous_gold_label)
    }

    /// Gold label after applying the edit.
    pub fn resulting_gold_label(&self) -> &str {
        self.changes.gold_label.as_deref().unwrap_or(&self.previous_gold_label)
    }

    /// Applies the edit to `record`.
    pub fn apply(&self, record: &InstanceRecord) -> InstanceRecord {
        let mut out = record.clone();
        if let Some(text) = &self.changes.text_fields {
            out = out.with_text(text.clone());
        }
        if let Some(label) = &self.changes.gold_label {
            out.gold_label = label.clone();
        }
        out
    }

    /// Moves a proposed edit to `status`. Repeating the current decision is
    /// a no-op; reversing a decision is an error.
    pub fn decide(&mut self, status: EditStatus) -> Result<bool> {
        match (self.status, status) {
            (current, wanted) if current == wanted => Ok(false),
            (EditStatus::Proposed, wanted) => {
                self.status = wanted;
                Ok(true)
            }
            (current, wanted) => Err(Error::Curation(format!(
                "edit {} is already {current:?}, cannot become {wanted:?}",
                self.edit_id
            ))),
        }
    }
}

/// Whether an edit qualifies for acceptance.
///
/// A hardening edit must keep the gold label and make the predictor wrong.
/// A repair needs only a non-empty change; it does not consult the model.
pub fn accept_rule(edit: &EditRecord) -> Result<bool> {
    match edit.edit_kind {
        EditKind::TrivialHardening => {
            let verdict = edit
                .predictor_verdict
                .as_ref()
                .ok_or_else(|| Error::Curation(format!("hardening edit {} has no predictor verdict", edit.edit_id)))?;
            Ok(!edit.changes_label() && verdict.flipped)
        }
        EditKind::ErrorRepair => Ok(!edit.changes.is_empty()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRepair {
    pub n_instances: usize,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// Mean candidate accuracy on each flag class before and after edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub n_candidates: usize,
    pub trivial: Option<ClassRepair>,
    pub erroneous: Option<ClassRepair>,
}

pub fn repair_report(before: &CorrectnessMatrix, after: &CorrectnessMatrix, flags: &FlagSet) -> Result<RepairReport> {
    if before.candidate_ids() != after.candidate_ids() {
        return Err(Error::Alignment(
            "before/after matrices list different candidates".into(),
        ));
    }
    if before.n_candidates() == 0 {
        return Err(Error::Stat("repair report needs at least one candidate".into()));
    }
    let class = |ids: &[String]| -> Result<Option<ClassRepair>> {
        if ids.is_empty() {
            return Ok(None);
        }
        let before_acc = mean_class_accuracy(before, ids)?;
        let after_acc = mean_class_accuracy(after, ids)?;
        Ok(Some(ClassRepair {
            n_instances: ids.len(),
            before: before_acc,
            after: after_acc,
            delta: after_acc - before_acc,
        }))
    };
    Ok(RepairReport {
        n_candidates: before.n_candidates(),
        trivial: class(&flags.trivial_ids)?,
        erroneous: class(&flags.erroneous_candidate_ids)?,
    })
}

fn mean_class_accuracy(v: &CorrectnessMatrix, ids: &[String]) -> Result<f64> {
    let cols = ids
        .iter()
        .map(|id| {
            v.index_of(id)
                .ok_or_else(|| Error::Alignment(format!("flagged instance {id:?} missing from matrix")))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_candidate: Vec<f64> = (0..v.n_candidates())
        .map(|k| {
            let row = v.row(k);
            cols.iter().filter(|&&c| row[c]).count() as f64 / cols.len() as f64
        })
        .collect();
    Ok(mean(&per_candidate).expect("at least one candidate"))
}
