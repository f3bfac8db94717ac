use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::difficulty::bin_index;
use crate::error::{Error, Result};
use crate::numeric::{mean, population_std};
use crate::types::{group_by_key, require_same_instances, CorrectnessMatrix, DifficultyVector, InstanceSet};

pub const DEFAULT_REGION_BINS: usize = 10;

/// Candidate accuracy per equal-width difficulty region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// `bins + 1` edges from 0 to 1.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub candidate_ids: Vec<String>,
    /// `accuracy[bin][candidate]`, `None` for an empty bin.
    pub accuracy: Vec<Vec<Option<f64>>>,
    /// Best candidate(s) per bin; ties are all listed, empty bins list none.
    pub best: Vec<Vec<String>>,
}

impl RegionReport {
    /// Mean accuracy across candidates per bin.
    pub fn mean_accuracy(&self) -> Vec<Option<f64>> {
        self.accuracy
            .iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().flatten().copied().collect();
                mean(&vals)
            })
            .collect()
    }
}

pub fn region_report(v: &CorrectnessMatrix, d: &DifficultyVector, bins: usize) -> Result<RegionReport> {
    if bins == 0 {
        return Err(Error::Invalid("region report needs at least one bin".into()));
    }
    require_same_instances(v.instance_ids(), d.instance_ids(), "region report")?;
    let bin_of: Vec<usize> = d.scores().iter().map(|&s| bin_index(s, bins)).collect();
    let mut counts = vec![0usize; bins];
    for &b in &bin_of {
        counts[b] += 1;
    }

    let mut accuracy = vec![Vec::with_capacity(v.n_candidates()); bins];
    for k in 0..v.n_candidates() {
        let mut hits = vec![0usize; bins];
        for (&b, &c) in bin_of.iter().zip(v.row(k)) {
            hits[b] += usize::from(c);
        }
        for b in 0..bins {
            accuracy[b].push((counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64));
        }
    }

    let best = accuracy
        .iter()
        .map(|row| {
            let top = row.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter()
                .zip(v.candidate_ids())
                .filter(|(a, _)| **a == Some(top))
                .map(|(_, id)| id.clone())
                .collect()
        })
        .collect();

    Ok(RegionReport {
        bin_edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        counts,
        candidate_ids: v.candidate_ids().to_vec(),
        accuracy,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDifficultyReport {
    pub labels: BTreeMap<String, LabelStats>,
}

/// Mean, spread and count of difficulty per gold label.
pub fn label_difficulty_report(instances: &InstanceSet, d: &DifficultyVector) -> Result<LabelDifficultyReport> {
    require_same_instances(instances.instance_ids(), d.instance_ids(), "label report")?;
    if let Some(r) = instances.records().iter().find(|r| r.gold_label.is_empty()) {
        return Err(Error::Invalid(format!(
            "instance {} has an empty gold label",
            r.instance_id
        )));
    }
    let groups = group_by_key(
        instances
            .records()
            .iter()
            .map(|r| &r.gold_label)
            .zip(d.scores().iter().copied()),
    );
    let labels = groups
        .into_iter()
        .map(|(label, scores)| {
            let stats = LabelStats {
                count: scores.len(),
                mean: mean(&scores).expect("groups are non-empty"),
                std: population_std(&scores).expect("groups are non-empty"),
            };
            (label, stats)
        })
        .collect();
    Ok(LabelDifficultyReport { labels })
}
