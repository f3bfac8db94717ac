//! Curation state rebuilt from, and advanced by, edit-log entries.

use std::collections::BTreeMap;

use ildae_core::curation::{EditRecord, EditStatus, FlagSet};
use ildae_core::io::{DecisionRecord, EditLogEntry};
use ildae_core::types::{DifficultyVector, InstanceRecord, InstanceSet};
use ildae_core::{Error, Result};
use serde::Serialize;

/// Immutable inputs the service is started with.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub task_name: String,
    pub instances: InstanceSet,
    pub difficulty: DifficultyVector,
    pub flags: FlagSet,
    pub labels: Vec<String>,
}

impl Dataset {
    /// Candidate labels default to the sorted set of gold labels.
    pub fn new(
        task_name: impl Into<String>,
        instances: InstanceSet,
        difficulty: DifficultyVector,
        flags: FlagSet,
    ) -> Result<Self> {
        if instances.instance_ids() != difficulty.instance_ids() {
            return Err(Error::Alignment(
                "instances and difficulty scores cover different ids".into(),
            ));
        }
        for id in flags.trivial_ids.iter().chain(&flags.erroneous_candidate_ids) {
            if instances.get(id).is_none() {
                return Err(Error::Alignment(format!(
                    "flagged instance {id:?} is not in the dataset"
                )));
            }
        }
        let labels = instances.labels();
        Ok(Self {
            task_name: task_name.into(),
            instances,
            difficulty,
            flags,
            labels,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }
}

/// Mutable curation state. Equal logs replay to equal states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationState {
    current: BTreeMap<String, InstanceRecord>,
    /// Bumped by every log entry that touches the instance.
    revisions: BTreeMap<String, u64>,
    /// Bumped only when an accepted edit changes the instance.
    versions: BTreeMap<String, u64>,
    attempts: BTreeMap<String, u32>,
    edits: BTreeMap<u64, EditRecord>,
    by_instance: BTreeMap<String, Vec<u64>>,
    last_id: u64,
}

impl CurationState {
    pub fn new(instances: &InstanceSet) -> Self {
        Self {
            current: instances
                .records()
                .iter()
                .map(|r| (r.instance_id.clone(), r.clone()))
                .collect(),
            revisions: BTreeMap::new(),
            versions: BTreeMap::new(),
            attempts: BTreeMap::new(),
            edits: BTreeMap::new(),
            by_instance: BTreeMap::new(),
            last_id: 0,
        }
    }

    pub fn replay(instances: &InstanceSet, entries: &[EditLogEntry]) -> Result<Self> {
        let mut state = Self::new(instances);
        for entry in entries {
            state.apply(entry)?;
        }
        Ok(state)
    }

    pub fn current(&self, id: &str) -> Option<&InstanceRecord> {
        self.current.get(id)
    }

    pub fn revision(&self, id: &str) -> u64 {
        self.revisions.get(id).copied().unwrap_or(0)
    }

    pub fn version(&self, id: &str) -> u64 {
        self.versions.get(id).copied().unwrap_or(0)
    }

    pub fn attempts(&self, id: &str) -> u32 {
        self.attempts.get(id).copied().unwrap_or(0)
    }

    pub fn edit(&self, edit_id: u64) -> Option<&EditRecord> {
        self.edits.get(&edit_id)
    }

    pub fn edits_for(&self, id: &str) -> Vec<&EditRecord> {
        self.by_instance
            .get(id)
            .map(|ids| ids.iter().map(|e| &self.edits[e]).collect())
            .unwrap_or_default()
    }

    /// Status of the latest edit on an instance, if any.
    pub fn latest_status(&self, id: &str) -> Option<EditStatus> {
        self.by_instance.get(id)?.last().map(|e| self.edits[e].status)
    }

    pub fn next_id(&self) -> u64 {
        self.last_id + 1
    }

    /// Advances the state by one log entry.
    pub fn apply(&mut self, entry: &EditLogEntry) -> Result<()> {
        let id = entry.edit_id();
        if id <= self.last_id {
            return Err(Error::Curation(format!(
                "entry {id} does not increase past {}",
                self.last_id
            )));
        }
        match entry {
            EditLogEntry::Edit(edit) => {
                if !self.current.contains_key(&edit.instance_id) {
                    return Err(Error::Curation(format!(
                        "edit {id} targets unknown instance {:?}",
                        edit.instance_id
                    )));
                }
                if edit.status != EditStatus::Proposed {
                    return Err(Error::Curation(format!(
                        "edit {id} is logged as {:?}, not proposed",
                        edit.status
                    )));
                }
                *self.attempts.entry(edit.instance_id.clone()).or_default() += 1;
                *self.revisions.entry(edit.instance_id.clone()).or_default() += 1;
                self.by_instance.entry(edit.instance_id.clone()).or_default().push(id);
                self.edits.insert(id, edit.clone());
            }
            EditLogEntry::Decision(DecisionRecord {
                target_edit_id, status, ..
            }) => {
                let edit = self
                    .edits
                    .get_mut(target_edit_id)
                    .ok_or_else(|| Error::Curation(format!("decision {id} targets unknown edit {target_edit_id}")))?;
                if !edit.decide(*status)? {
                    return Err(Error::Curation(format!("decision {id} repeats the current status")));
                }
                let instance = edit.instance_id.clone();
                if *status == EditStatus::Accepted {
                    let updated = edit.apply(&self.current[&instance]);
                    self.current.insert(instance.clone(), updated);
                    *self.versions.entry(instance.clone()).or_default() += 1;
                }
                *self.revisions.entry(instance).or_default() += 1;
            }
        }
        self.last_id = id;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ildae_core::curation::{ChangedFields, EditKind};
    use ildae_core::types::TextField;

    fn set() -> InstanceSet {
        InstanceSet::new(vec![
            InstanceRecord::new("a", vec![TextField::new("t", "one")], "x", "test"),
            InstanceRecord::new("b", vec![TextField::new("t", "two")], "y", "test"),
        ])
        .unwrap()
    }

    fn edit(id: u64, inst: &str) -> EditLogEntry {
        EditLogEntry::Edit(EditRecord {
            edit_id: id,
            instance_id: inst.into(),
            edit_kind: EditKind::ErrorRepair,
            changes: ChangedFields {
                text_fields: None,
                gold_label: Some("z".into()),
            },
            previous_gold_label: "x".into(),
            author: "a".into(),
            timestamp_ms: 0,
            predictor_verdict: None,
            status: EditStatus::Proposed,
            attempt: 1,
            rationale: None,
        })
    }

    fn decide(id: u64, target: u64, status: EditStatus) -> EditLogEntry {
        EditLogEntry::Decision(DecisionRecord {
            edit_id: id,
            target_edit_id: target,
            status,
            author: "r".into(),
            timestamp_ms: 0,
        })
    }

    #[test]
    fn accepted_edits_change_the_current_record() {
        let s = CurationState::replay(&set(), &[edit(1, "a"), decide(2, 1, EditStatus::Accepted)]).unwrap();
        assert_eq!(s.current("a").unwrap().gold_label, "z");
        assert_eq!((s.revision("a"), s.version("a"), s.attempts("a")), (2, 1, 1));
        assert_eq!(s.latest_status("a"), Some(EditStatus::Accepted));
        assert_eq!(s.revision("b"), 0);
    }

    #[test]
    fn rejected_edits_leave_the_record() {
        let s = CurationState::replay(&set(), &[edit(1, "a"), decide(2, 1, EditStatus::Rejected)]).unwrap();
        assert_eq!(s.current("a").unwrap().gold_label, "x");
        assert_eq!(s.version("a"), 0);
    }

    #[test]
    fn bad_entries_are_refused() {
        assert!(CurationState::replay(&set(), &[edit(1, "nope")]).is_err());
        assert!(CurationState::replay(&set(), &[edit(2, "a"), edit(1, "b")]).is_err());
        assert!(CurationState::replay(
            &set(),
            &[
                edit(1, "a"),
                decide(2, 1, EditStatus::Accepted),
                decide(3, 1, EditStatus::Rejected)
            ]
        )
        .is_err());
    }
}
