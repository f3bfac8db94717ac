//! Accuracy, rank fidelity of selected subsets, difficulty-weighted accuracy,
//! and per-region / per-label reports.

mod rank;
mod reports;
mod weighted;

pub use rank::{average_ranks, kendall_tau, spearman_rho};
pub use reports::{
    label_difficulty_report, region_report, LabelDifficultyReport, LabelStats, RegionReport, DEFAULT_REGION_BINS,
};
pub use weighted::{
    default_mu_grid, instance_weights, ood_correlation_compare, ood_mu_sweep, weighted_accuracy,
    weighted_accuracy_scores, CandidateOod, MuSweepPoint, OodComparison,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{PolicyKind, SelectionPlan};
use crate::types::CorrectnessMatrix;

/// Fraction of `true` entries.
pub fn accuracy(correct: &[bool]) -> Result<f64> {
    if correct.is_empty() {
        return Err(Error::Stat("accuracy of an empty set is undefined".into()));
    }
    Ok(count_true(correct) as f64 / correct.len() as f64)
}

fn count_true(v: &[bool]) -> usize {
    v.iter().filter(|&&c| c).count()
}

/// Accuracy of every candidate, in candidate order.
pub fn candidate_accuracies(v: &CorrectnessMatrix) -> Result<Vec<f64>> {
    (0..v.n_candidates()).map(|k| accuracy(v.row(k))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFidelity {
    pub candidate_id: String,
    pub full_accuracy: f64,
    pub subset_accuracy: f64,
}

/// How well a subset reproduces the full-set ranking of candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub policy: PolicyKind,
    pub budget: usize,
    pub n_selected: usize,
    pub candidates: Vec<CandidateFidelity>,
    pub kendall_tau: f64,
}

/// Kendall tau between candidate accuracies on the full set and on `plan`.
pub fn selection_fidelity(v: &CorrectnessMatrix, plan: &SelectionPlan) -> Result<FidelityReport> {
    if plan.is_empty() {
        return Err(Error::Selection("plan selects no instances".into()));
    }
    if v.n_candidates() < 2 {
        return Err(Error::Stat("fidelity needs at least two candidates".into()));
    }
    let columns = plan
        .selected_ids
        .iter()
        .map(|id| {
            v.index_of(id)
                .ok_or_else(|| Error::Selection(format!("planned instance {id:?} is not in the correctness matrix")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::with_capacity(v.n_candidates());
    for (id, row) in v.rows() {
        let subset_correct = columns.iter().filter(|&&c| row[c]).count();
        candidates.push(CandidateFidelity {
            candidate_id: id.to_string(),
            full_accuracy: accuracy(row)?,
            subset_accuracy: subset_correct as f64 / columns.len() as f64,
        });
    }
    let full: Vec<f64> = candidates.iter().map(|c| c.full_accuracy).collect();
    let subset: Vec<f64> = candidates.iter().map(|c| c.subset_accuracy).collect();
    Ok(FidelityReport {
        policy: plan.policy.kind,
        budget: plan.budget_requested,
        n_selected: plan.len(),
        kendall_tau: kendall_tau(&full, &subset)?,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{select_random, SelectionPolicy};

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn plan_of(selected: &[&str]) -> SelectionPlan {
        SelectionPlan {
            selected_ids: selected.iter().map(|s| s.to_string()).collect(),
            budget_requested: selected.len(),
            source_size: 4,
            policy: SelectionPolicy::with_defaults(PolicyKind::Random, 0),
            per_band_counts: None,
            degenerate_fallback: false,
        }
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[true, true]).unwrap(), 1.0);
        assert_eq!(accuracy(&[false, false]).unwrap(), 0.0);
        assert_eq!(accuracy(&[true, true, false, false]).unwrap(), 0.5);
        assert!(matches!(accuracy(&[]), Err(Error::Stat(_))));
    }

    fn hand_matrix() -> CorrectnessMatrix {
        // full accuracies (1.0, 0.5, 0.25); on {i1, i2}: (1.0, 0.5, 0.0)
        CorrectnessMatrix::from_rows(
            ids("c", 3),
            vec!["i1".into(), "i2".into(), "i3".into(), "i4".into()],
            vec![
                vec![true, true, true, true],
                vec![true, false, true, false],
                vec![false, false, false, true],
            ],
        )
        .unwrap()
    }

    #[test]
    fn fidelity_hand_example() {
        let report = selection_fidelity(&hand_matrix(), &plan_of(&["i1", "i2"])).unwrap();
        let full: Vec<f64> = report.candidates.iter().map(|c| c.full_accuracy).collect();
        let sub: Vec<f64> = report.candidates.iter().map(|c| c.subset_accuracy).collect();
        assert_eq!(full, vec![1.0, 0.5, 0.25]);
        assert_eq!(sub, vec![1.0, 0.5, 0.0]);
        assert_eq!(report.kendall_tau, 1.0);
        assert_eq!(report.n_selected, 2);
    }

    #[test]
    fn fidelity_of_full_plan_is_one() {
        let v = hand_matrix();
        let plan = select_random(v.instance_ids(), 100, 1).unwrap();
        assert_eq!(selection_fidelity(&v, &plan).unwrap().kendall_tau, 1.0);
    }

    #[test]
    fn fidelity_errors() {
        let tied = CorrectnessMatrix::from_rows(ids("c", 3), ids("i", 2), vec![vec![true, false]; 3]).unwrap();
        assert!(matches!(
            selection_fidelity(&tied, &plan_of(&["i0"])),
            Err(Error::DegenerateRanking(_))
        ));
        assert!(matches!(
            selection_fidelity(&hand_matrix(), &plan_of(&[])),
            Err(Error::Selection(_))
        ));
        assert!(matches!(
            selection_fidelity(&hand_matrix(), &plan_of(&["zz"])),
            Err(Error::Selection(_))
        ));
    }
}
