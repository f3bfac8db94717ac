//! Shared domain types.
//!
//! Every collection keyed by instance is stored in lexicographic `instance_id`
//! order, whatever order the caller supplied. Constructors validate ranges and
//! uniqueness, so a value that exists is a valid value.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named piece of instance text, e.g. `premise` or `hypothesis`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextField {
    pub name: String,
    pub text: String,
}

impl TextField {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// One evaluation instance plus the metadata the analyses need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawInstanceRecord")]
pub struct InstanceRecord {
    pub instance_id: String,
    pub text_fields: Vec<TextField>,
    pub gold_label: String,
    pub char_length: usize,
    pub split_tag: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstanceRecord {
    instance_id: String,
    text_fields: Vec<TextField>,
    gold_label: String,
    char_length: usize,
    split_tag: String,
}

impl TryFrom<RawInstanceRecord> for InstanceRecord {
    type Error = Error;

    fn try_from(raw: RawInstanceRecord) -> Result<Self> {
        let record = InstanceRecord::new(raw.instance_id, raw.text_fields, raw.gold_label, raw.split_tag);
        if record.char_length != raw.char_length {
            return Err(Error::Invalid(format!(
                "instance {}: char_length {} does not match text ({} characters)",
                record.instance_id, raw.char_length, record.char_length
            )));
        }
        Ok(record)
    }
}

impl InstanceRecord {
    pub fn new(
        instance_id: impl Into<String>,
        text_fields: Vec<TextField>,
        gold_label: impl Into<String>,
        split_tag: impl Into<String>,
    ) -> Self {
        let char_length = char_length_of(&text_fields);
        Self {
            instance_id: instance_id.into(),
            text_fields,
            gold_label: gold_label.into(),
            char_length,
            split_tag: split_tag.into(),
        }
    }

    /// Replaces the text and recomputes `char_length`.
    pub fn with_text(mut self, text_fields: Vec<TextField>) -> Self {
        self.char_length = char_length_of(&text_fields);
        self.text_fields = text_fields;
        self
    }
}

pub fn char_length_of(fields: &[TextField]) -> usize {
    fields.iter().map(|f| f.text.chars().count()).sum()
}

/// Instance records with unique ids, kept in id order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstanceSet {
    records: Vec<InstanceRecord>,
    ids: Vec<String>,
}

impl InstanceSet {
    pub fn new(mut records: Vec<InstanceRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        if let Some(w) = records.windows(2).find(|w| w[0].instance_id == w[1].instance_id) {
            return Err(Error::Invalid(format!("duplicate instance_id {:?}", w[0].instance_id)));
        }
        for r in &records {
            if r.char_length != char_length_of(&r.text_fields) {
                return Err(Error::Invalid(format!("instance {}: stale char_length", r.instance_id)));
            }
        }
        let ids = records.iter().map(|r| r.instance_id.clone()).collect();
        Ok(Self { records, ids })
    }

    pub fn records(&self) -> &[InstanceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, instance_id: &str) -> Option<&InstanceRecord> {
        self.records
            .binary_search_by(|r| r.instance_id.as_str().cmp(instance_id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Sorted list of distinct gold labels.
    pub fn labels(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.gold_label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn into_records(self) -> Vec<InstanceRecord> {
        self.records
    }
}

/// Ensemble member x instance grid of gold-answer confidences.
///
/// Rows are sorted by model id and columns by instance id. Absent entries are
/// marked in `mask` (row-major, `true` = present) and hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMatrix {
    model_ids: Vec<String>,
    instance_ids: Vec<String>,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl ConfidenceMatrix {
    /// Builds a matrix from row-major `values` (`model_ids.len()` rows).
    pub fn new(
        model_ids: Vec<String>,
        instance_ids: Vec<String>,
        values: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let (rows, cols) = (model_ids.len(), instance_ids.len());
        if values.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "confidence grid has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(m) = &mask {
            if m.len() != values.len() {
                return Err(Error::Invalid("mask shape differs from value grid".into()));
            }
        }
        ensure_unique(&model_ids, "model_id")?;
        ensure_unique(&instance_ids, "instance_id")?;

        let present = |idx: usize| mask.as_ref().is_none_or(|m| m[idx]);
        for (idx, &v) in values.iter().enumerate() {
            if present(idx) && !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!(
                    "confidence {v} for model {} on instance {} is outside [0,1]",
                    model_ids[idx / cols],
                    instance_ids[idx % cols]
                )));
            }
        }
        let empty_columns: Vec<String> = (0..cols)
            .filter(|&c| !(0..rows).any(|r| present(r * cols + c)))
            .map(|c| instance_ids[c].clone())
            .collect();
        if !empty_columns.is_empty() {
            return Err(Error::MissingPredictions {
                instance_ids: empty_columns,
            });
        }

        let row_order = sorted_order(&model_ids);
        let col_order = sorted_order(&instance_ids);
        let mut sorted_values = Vec::with_capacity(values.len());
        let mut sorted_mask = mask.as_ref().map(|_| Vec::with_capacity(values.len()));
        for &r in &row_order {
            for &c in &col_order {
                let idx = r * cols + c;
                let is_present = present(idx);
                sorted_values.push(if is_present { values[idx] } else { 0.0 });
                if let Some(m) = sorted_mask.as_mut() {
                    m.push(is_present);
                }
            }
        }
        // A mask with every entry present carries no information.
        let sorted_mask = sorted_mask.filter(|m| m.iter().any(|p| !p));
        Ok(Self {
            model_ids: permute(&model_ids, &row_order),
            instance_ids: permute(&instance_ids, &col_order),
            values: sorted_values,
            mask: sorted_mask,
        })
    }

    /// Convenience constructor from nested rows, all entries present.
    pub fn from_rows(model_ids: Vec<String>, instance_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != model_ids.len() || rows.iter().any(|r| r.len() != instance_ids.len()) {
            return Err(Error::Invalid("ragged confidence rows".into()));
        }
        Self::new(model_ids, instance_ids, rows.concat(), None)
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn is_masked(&self) -> bool {
        self.mask.is_some()
    }

    /// Confidence of `model` on `instance`, `None` when absent.
    pub fn get(&self, model: usize, instance: usize) -> Option<f64> {
        let idx = model * self.n_instances() + instance;
        match &self.mask {
            Some(m) if !m[idx] => None,
            _ => Some(self.values[idx]),
        }
    }

    /// Present confidences of one instance column, in model order.
    pub fn column(&self, instance: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_models()).filter_map(move |m| self.get(m, instance))
    }

    fn restrict_columns(&self, keep: &[usize]) -> Self {
        let cols = self.n_instances();
        let mut values = Vec::with_capacity(self.n_models() * keep.len());
        let mut mask = self.mask.as_ref().map(|_| Vec::with_capacity(values.capacity()));
        for r in 0..self.n_models() {
            for &c in keep {
                values.push(self.values[r * cols + c]);
                if let (Some(out), Some(m)) = (mask.as_mut(), self.mask.as_ref()) {
                    out.push(m[r * cols + c]);
                }
            }
        }
        Self {
            model_ids: self.model_ids.clone(),
            instance_ids: keep.iter().map(|&c| self.instance_ids[c].clone()).collect(),
            values,
            mask: mask.filter(|m: &Vec<bool>| m.iter().any(|p| !p)),
        }
    }
}

/// Per-instance difficulty scores in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyVector {
    instance_ids: Vec<String>,
    scores: Vec<f64>,
    n_models: Vec<u32>,
}

impl DifficultyVector {
    pub fn new(instance_ids: Vec<String>, scores: Vec<f64>, n_models: Vec<u32>) -> Result<Self> {
        if instance_ids.len() != scores.len() || scores.len() != n_models.len() {
            return Err(Error::Invalid(format!(
                "difficulty vector lengths disagree: {} ids, {} scores, {} counts",
                instance_ids.len(),
                scores.len(),
                n_models.len()
            )));
        }
        ensure_unique(&instance_ids, "instance_id")?;
        if let Some((id, s)) = instance_ids
            .iter()
            .zip(&scores)
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::Invalid(format!(
                "difficulty {s} of instance {id} is outside [0,1]"
            )));
        }
        let order = sorted_order(&instance_ids);
        Ok(Self {
            instance_ids: permute(&instance_ids, &order),
            scores: permute(&scores, &order),
            n_models: permute(&n_models, &order),
        })
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_models(&self) -> &[u32] {
        &self.n_models
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score_of(&self, instance_id: &str) -> Option<f64> {
        self.index_of(instance_id).map(|i| self.scores[i])
    }

    pub fn index_of(&self, instance_id: &str) -> Option<usize> {
        self.instance_ids
            .binary_search_by(|id| id.as_str().cmp(instance_id))
            .ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.instance_ids
            .iter()
            .map(String::as_str)
            .zip(self.scores.iter().copied())
    }
}

/// Candidate x instance binary correctness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    candidate_ids: Vec<String>,
    instance_ids: Vec<String>,
    correct: Vec<bool>,
}

impl CorrectnessMatrix {
    /// Builds from row-major `correct` (`candidate_ids.len()` rows). Candidate
    /// order is kept as given; instance columns are sorted by id.
    pub fn new(candidate_ids: Vec<String>, instance_ids: Vec<String>, correct: Vec<bool>) -> Result<Self> {
        let (rows, cols) = (candidate_ids.len(), instance_ids.len());
        if correct.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "correctness grid has {} cells, expected {rows}x{cols}",
                correct.len()
            )));
        }
        ensure_unique(&candidate_ids, "candidate_id")?;
        ensure_unique(&instance_ids, "instance_id")?;
        let order = sorted_order(&instance_ids);
        let mut sorted = Vec::with_capacity(correct.len());
        for r in 0..rows {
            sorted.extend(order.iter().map(|&c| correct[r * cols + c]));
        }
        Ok(Self {
            candidate_ids,
            instance_ids: permute(&instance_ids, &order),
            correct: sorted,
        })
    }

    pub fn from_rows(candidate_ids: Vec<String>, instance_ids: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self> {
        if rows.len() != candidate_ids.len() || rows.iter().any(|r| r.len() != instance_ids.len()) {
            return Err(Error::Invalid("ragged correctness rows".into()));
        }
        Self::new(candidate_ids, instance_ids, rows.concat())
    }

    pub fn candidate_ids(&self) -> &[String] {
        &self.candidate_ids
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn row(&self, candidate: usize) -> &[bool] {
        let n = self.n_instances();
        &self.correct[candidate * n..(candidate + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[bool])> {
        self.candidate_ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), self.row(k)))
    }

    pub fn index_of(&self, instance_id: &str) -> Option<usize> {
        self.instance_ids
            .binary_search_by(|id| id.as_str().cmp(instance_id))
            .ok()
    }

    /// Returns a copy with the listed cells replaced.
    pub fn with_cells(&self, updates: impl IntoIterator<Item = (usize, usize, bool)>) -> Self {
        let mut out = self.clone();
        let n = self.n_instances();
        for (k, i, value) in updates {
            out.correct[k * n + i] = value;
        }
        out
    }

    fn restrict_columns(&self, keep: &[usize]) -> Self {
        let n = self.n_instances();
        let mut correct = Vec::with_capacity(self.n_candidates() * keep.len());
        for k in 0..self.n_candidates() {
            correct.extend(keep.iter().map(|&c| self.correct[k * n + c]));
        }
        Self {
            candidate_ids: self.candidate_ids.clone(),
            instance_ids: keep.iter().map(|&c| self.instance_ids[c].clone()).collect(),
            correct,
        }
    }
}

/// Strength of difficulty weighting; `mu = 0` gives plain accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WeightingParams {
    mu: f64,
}

impl WeightingParams {
    pub const DEFAULT_MU: f64 = 1.0;

    pub fn new(mu: f64) -> Result<Self> {
        if mu.is_finite() && mu >= 0.0 {
            Ok(Self { mu })
        } else {
            Err(Error::Invalid(format!(
                "mu must be a finite non-negative number, got {mu}"
            )))
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl Default for WeightingParams {
    fn default() -> Self {
        Self { mu: Self::DEFAULT_MU }
    }
}

impl TryFrom<f64> for WeightingParams {
    type Error = Error;
    fn try_from(mu: f64) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<WeightingParams> for f64 {
    fn from(p: WeightingParams) -> f64 {
        p.mu
    }
}

/// Collections that carry an ordered instance id list and can be cut down to
/// a subset of it.
pub trait InstanceKeyed: Sized {
    fn keyed_ids(&self) -> &[String];
    /// Keeps only the columns at `keep` (indices into `keyed_ids`, ascending).
    fn retain_columns(&self, keep: &[usize]) -> Self;
}

impl InstanceKeyed for DifficultyVector {
    fn keyed_ids(&self) -> &[String] {
        &self.instance_ids
    }
    fn retain_columns(&self, keep: &[usize]) -> Self {
        Self {
            instance_ids: keep.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            scores: keep.iter().map(|&i| self.scores[i]).collect(),
            n_models: keep.iter().map(|&i| self.n_models[i]).collect(),
        }
    }
}

impl InstanceKeyed for CorrectnessMatrix {
    fn keyed_ids(&self) -> &[String] {
        &self.instance_ids
    }
    fn retain_columns(&self, keep: &[usize]) -> Self {
        self.restrict_columns(keep)
    }
}

impl InstanceKeyed for ConfidenceMatrix {
    fn keyed_ids(&self) -> &[String] {
        &self.instance_ids
    }
    fn retain_columns(&self, keep: &[usize]) -> Self {
        self.restrict_columns(keep)
    }
}

impl InstanceKeyed for InstanceSet {
    fn keyed_ids(&self) -> &[String] {
        &self.ids
    }
    fn retain_columns(&self, keep: &[usize]) -> Self {
        Self {
            records: keep.iter().map(|&i| self.records[i].clone()).collect(),
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Two collections restricted to their shared instance ids.
#[derive(Debug, Clone)]
pub struct Aligned<A, B> {
    pub left: A,
    pub right: B,
    pub dropped_left: Vec<String>,
    pub dropped_right: Vec<String>,
}

/// Restricts both collections to the intersection of their instance ids, in
/// lexicographic id order.
pub fn align<A: InstanceKeyed, B: InstanceKeyed>(a: &A, b: &B) -> Result<Aligned<A, B>> {
    align_by_ids(a, a.keyed_ids(), b, b.keyed_ids())
}

fn align_by_ids<A: InstanceKeyed, B: InstanceKeyed>(
    a: &A,
    a_ids: &[String],
    b: &B,
    b_ids: &[String],
) -> Result<Aligned<A, B>> {
    // Both id lists are sorted, so a merge walk finds the intersection.
    let (mut i, mut j) = (0, 0);
    let (mut keep_a, mut keep_b) = (Vec::new(), Vec::new());
    let (mut dropped_left, mut dropped_right) = (Vec::new(), Vec::new());
    while i < a_ids.len() || j < b_ids.len() {
        match (a_ids.get(i), b_ids.get(j)) {
            (Some(x), Some(y)) if x == y => {
                keep_a.push(i);
                keep_b.push(j);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                dropped_left.push(x.clone());
                i += 1;
            }
            (Some(_), Some(y)) => {
                dropped_right.push(y.clone());
                j += 1;
            }
            (Some(x), None) => {
                dropped_left.push(x.clone());
                i += 1;
            }
            (None, Some(y)) => {
                dropped_right.push(y.clone());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if keep_a.is_empty() {
        return Err(Error::Alignment(format!(
            "no shared instance ids ({} vs {} instances)",
            a_ids.len(),
            b_ids.len()
        )));
    }
    Ok(Aligned {
        left: a.retain_columns(&keep_a),
        right: b.retain_columns(&keep_b),
        dropped_left,
        dropped_right,
    })
}

/// Errors unless both collections cover exactly the same instance ids.
pub(crate) fn require_same_instances(left: &[String], right: &[String], what: &str) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{what}: instance ids differ ({} vs {}); align the inputs first",
            left.len(),
            right.len()
        )))
    }
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Invalid(format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

fn sorted_order(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

fn permute<T: Clone>(values: &[T], order: &[usize]) -> Vec<T> {
    order.iter().map(|&i| values[i].clone()).collect()
}

/// Groups `values` by key, preserving key order.
pub(crate) fn group_by_key<'a, K: Ord + Clone + 'a, V: Copy>(
    pairs: impl IntoIterator<Item = (&'a K, V)>,
) -> BTreeMap<K, Vec<V>> {
    let mut out: BTreeMap<K, Vec<V>> = BTreeMap::new();
    for (k, v) in pairs {
        out.entry(k.clone()).or_default().push(v);
    }
    out
}
