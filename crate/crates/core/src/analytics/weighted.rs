//! Difficulty-weighted accuracy.
//!
//! Instance `i` gets weight `(1 + mu * d_i) / (N + mu * sum_j d_j)`; the
//! weighted accuracy is the total weight of correctly answered instances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{accuracy, kendall_tau};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::types::{require_same_instances, CorrectnessMatrix, DifficultyVector, WeightingParams};

/// Log-spaced sweep grid for `mu`.
pub fn default_mu_grid() -> Vec<f64> {
    vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
}

fn unnormalized(scores: &[f64], mu: f64) -> Vec<f64> {
    scores.iter().map(|d| 1.0 + mu * d).collect()
}

/// Per-instance weights; they sum to one.
pub fn instance_weights(scores: &[f64], params: WeightingParams) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Stat("weights of an empty set are undefined".into()));
    }
    let raw = unnormalized(scores, params.mu());
    let total = pairwise_sum(&raw);
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Weighted accuracy over aligned correctness and difficulty slices.
///
/// Numerator and normalizer are summed over the same tree, with incorrect
/// instances contributing zero, so `mu = 0` reproduces [`accuracy`] exactly
/// and an all-correct vector gives exactly one.
pub fn weighted_accuracy_scores(correct: &[bool], scores: &[f64], params: WeightingParams) -> Result<f64> {
    if correct.len() != scores.len() {
        return Err(Error::Stat(format!(
            "length mismatch: {} correctness values vs {} scores",
            correct.len(),
            scores.len()
        )));
    }
    if correct.is_empty() {
        return Err(Error::Stat("weighted accuracy of an empty set is undefined".into()));
    }
    let raw = unnormalized(scores, params.mu());
    let hits: Vec<f64> = raw
        .iter()
        .zip(correct)
        .map(|(&r, &c)| if c { r } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&hits) / pairwise_sum(&raw))
}

pub fn weighted_accuracy(correct: &[bool], d: &DifficultyVector, params: WeightingParams) -> Result<f64> {
    weighted_accuracy_scores(correct, d.scores(), params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOod {
    pub candidate_id: String,
    pub accuracy: f64,
    pub weighted_accuracy: f64,
    pub ood_accuracy: f64,
}

/// Rank agreement of plain and weighted in-domain accuracy with OOD accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodComparison {
    pub mu: f64,
    pub tau_unweighted: f64,
    pub tau_weighted: f64,
    pub candidates: Vec<CandidateOod>,
}

impl OodComparison {
    pub fn improvement(&self) -> f64 {
        self.tau_weighted - self.tau_unweighted
    }
}

/// `ood_accuracies` maps candidate id to its out-of-domain accuracy and must
/// cover exactly the candidates of `in_domain`.
pub fn ood_correlation_compare(
    in_domain: &CorrectnessMatrix,
    d: &DifficultyVector,
    params: WeightingParams,
    ood_accuracies: &BTreeMap<String, f64>,
) -> Result<OodComparison> {
    require_same_instances(in_domain.instance_ids(), d.instance_ids(), "OOD comparison")?;
    if in_domain.n_candidates() < 2 {
        return Err(Error::Stat("OOD comparison needs at least two candidates".into()));
    }
    if ood_accuracies.len() != in_domain.n_candidates() {
        return Err(Error::Alignment(format!(
            "{} OOD accuracies for {} candidates",
            ood_accuracies.len(),
            in_domain.n_candidates()
        )));
    }
    let mut candidates = Vec::with_capacity(in_domain.n_candidates());
    for (id, row) in in_domain.rows() {
        let ood = *ood_accuracies
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("no OOD accuracy for candidate {id:?}")))?;
        candidates.push(CandidateOod {
            candidate_id: id.to_string(),
            accuracy: accuracy(row)?,
            weighted_accuracy: weighted_accuracy(row, d, params)?,
            ood_accuracy: ood,
        });
    }
    let ood: Vec<f64> = candidates.iter().map(|c| c.ood_accuracy).collect();
    let plain: Vec<f64> = candidates.iter().map(|c| c.accuracy).collect();
    let weighted: Vec<f64> = candidates.iter().map(|c| c.weighted_accuracy).collect();
    Ok(OodComparison {
        mu: params.mu(),
        tau_unweighted: kendall_tau(&plain, &ood)?,
        tau_weighted: kendall_tau(&weighted, &ood)?,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSweepPoint {
    pub mu: f64,
    pub tau_unweighted: f64,
    pub tau_weighted: f64,
}

/// [`ood_correlation_compare`] at every `mu` of the grid.
pub fn ood_mu_sweep(
    in_domain: &CorrectnessMatrix,
    d: &DifficultyVector,
    mus: &[f64],
    ood_accuracies: &BTreeMap<String, f64>,
) -> Result<Vec<MuSweepPoint>> {
    mus.iter()
        .map(|&mu| {
            let cmp = ood_correlation_compare(in_domain, d, WeightingParams::new(mu)?, ood_accuracies)?;
            Ok(MuSweepPoint {
                mu,
                tau_unweighted: cmp.tau_unweighted,
                tau_weighted: cmp.tau_weighted,
            })
        })
        .collect()
}
