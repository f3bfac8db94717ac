//! Fidelity sweeps: policy × budget × replicate grids of Kendall tau.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::selection_fidelity;
use crate::error::{Error, Result};
use crate::numeric::{mean, sample_std};
use crate::rng::derive_seed;
use crate::selection::{
    budget_from_percentage, select_banded, select_length_heuristic, select_random, PolicyKind, SelectionPlan,
    SelectionPolicy,
};
use crate::types::{require_same_instances, CorrectnessMatrix, DifficultyVector, InstanceRecord};

pub const DEFAULT_BUDGET_PERCENTAGES: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
pub const DEFAULT_REPLICATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub policies: Vec<PolicyKind>,
    pub percentages: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub band_edges: (f64, f64),
    pub band_shares: (f64, f64, f64),
}

impl Default for SweepConfig {
    fn default() -> Self {
        let defaults = SelectionPolicy::with_defaults(PolicyKind::Banded, 0);
        Self {
            policies: vec![PolicyKind::Banded, PolicyKind::Random],
            percentages: DEFAULT_BUDGET_PERCENTAGES.to_vec(),
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            band_edges: defaults.band_edges,
            band_shares: defaults.band_shares,
        }
    }
}

/// One (policy, budget) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub policy: PolicyKind,
    pub percentage: f64,
    pub budget: usize,
    /// Tau per replicate, `None` where the subset ranking was degenerate.
    pub taus: Vec<Option<f64>>,
    pub n_degenerate: usize,
    /// Mean over non-degenerate replicates.
    pub mean_tau: Option<f64>,
    /// Sample standard deviation over non-degenerate replicates.
    pub std_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_instances: usize,
    pub n_candidates: usize,
    pub replicates: usize,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, policy: PolicyKind, percentage: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.percentage == percentage)
    }
}

/// Seed of replicate `r`; shared by all policies so comparisons are paired.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, "replicate", r as u64)
}

fn plan_for(
    kind: PolicyKind,
    policy: &SelectionPolicy,
    budget: usize,
    d: &DifficultyVector,
    instances: Option<&[InstanceRecord]>,
) -> Result<SelectionPlan> {
    match kind {
        PolicyKind::Banded => select_banded(d, budget, policy),
        PolicyKind::Random => select_random(d.instance_ids(), budget, policy.seed),
        PolicyKind::LengthHeuristic => {
            let records = instances.ok_or_else(|| Error::Invalid("length heuristic needs instance metadata".into()))?;
            select_length_heuristic(records, budget, policy)
        }
    }
}

/// Runs the grid on a pool of `workers` threads. Output does not depend on
/// the worker count.
pub fn fidelity_sweep(
    v: &CorrectnessMatrix,
    d: &DifficultyVector,
    instances: Option<&[InstanceRecord]>,
    config: &SweepConfig,
    workers: usize,
) -> Result<SweepReport> {
    require_same_instances(v.instance_ids(), d.instance_ids(), "fidelity sweep")?;
    if let Some(records) = instances {
        let ids: Vec<String> = records.iter().map(|r| r.instance_id.clone()).collect();
        require_same_instances(&ids, d.instance_ids(), "fidelity sweep metadata")?;
    }
    if config.replicates == 0 {
        return Err(Error::Invalid("a sweep needs at least one replicate".into()));
    }
    // Validate edges and shares once, up front.
    SelectionPolicy::new(PolicyKind::Banded, config.band_edges, config.band_shares, config.seed)?;
    let budgets = config
        .percentages
        .iter()
        .map(|&p| budget_from_percentage(d.len(), p))
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for &kind in &config.policies {
        for (pi, &budget) in budgets.iter().enumerate() {
            if budget == 0 {
                continue;
            }
            for r in 0..config.replicates {
                tasks.push((kind, pi, budget, r));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<Option<f64>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(kind, _, budget, r)| {
                let policy = SelectionPolicy::new(
                    kind,
                    config.band_edges,
                    config.band_shares,
                    replicate_seed(config.seed, r),
                )?;
                let plan = plan_for(kind, &policy, budget, d, instances)?;
                match selection_fidelity(v, &plan) {
                    Ok(report) => Ok(Some(report.kendall_tau)),
                    Err(Error::DegenerateRanking(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });

    let mut outcomes = tasks.iter().zip(outcomes);
    let mut cells = Vec::new();
    for &kind in &config.policies {
        for (pi, &budget) in budgets.iter().enumerate() {
            let mut taus = Vec::new();
            if budget > 0 {
                for _ in 0..config.replicates {
                    let (&(k, p, _, _), out) = outcomes.next().expect("one outcome per task");
                    debug_assert!(k == kind && p == pi);
                    taus.push(out?);
                }
            }
            let valid: Vec<f64> = taus.iter().flatten().copied().collect();
            cells.push(SweepCell {
                policy: kind,
                percentage: config.percentages[pi],
                budget,
                n_degenerate: taus.len() - valid.len(),
                mean_tau: mean(&valid),
                std_tau: sample_std(&valid),
                taus,
            });
        }
    }
    Ok(SweepReport {
        n_instances: d.len(),
        n_candidates: v.n_candidates(),
        replicates: config.replicates,
        seed: config.seed,
        cells,
    })
}
