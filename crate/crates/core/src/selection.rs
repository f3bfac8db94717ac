//! Budgeted instance selection.
//!
//! The banded policy splits instances into low / moderate / high difficulty
//! bands and spends most of the budget on the moderate band. Random and
//! length-heuristic selection are the baselines it is compared against.
//!
//! Every band is shuffled once with a seed derived from the policy seed and
//! the plan takes a prefix of each shuffled band. Band counts are allocated
//! one unit at a time, so a larger budget always yields a superset of the
//! plan for a smaller one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{DifficultyVector, InstanceRecord};
use rand::seq::SliceRandom;

pub const DEFAULT_BAND_EDGES: (f64, f64) = (0.2, 0.8);
pub const DEFAULT_BAND_SHARES: (f64, f64, f64) = (0.10, 0.80, 0.10);

const SHARE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Banded,
    Random,
    LengthHeuristic,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Banded => "banded",
            PolicyKind::Random => "random",
            PolicyKind::LengthHeuristic => "length_heuristic",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "banded" => Ok(PolicyKind::Banded),
            "random" => Ok(PolicyKind::Random),
            "length_heuristic" | "length" => Ok(PolicyKind::LengthHeuristic),
            other => Err(Error::Invalid(format!(
                "unknown selection policy {other:?} (expected banded, random or length_heuristic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Moderate,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Moderate, Band::High];

    fn index(self) -> usize {
        self as usize
    }

    fn stream_label(self) -> &'static str {
        match self {
            Band::Low => "band-low",
            Band::Moderate => "band-moderate",
            Band::High => "band-high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct SelectionPolicy {
    pub kind: PolicyKind,
    pub band_edges: (f64, f64),
    pub band_shares: (f64, f64, f64),
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    kind: PolicyKind,
    band_edges: (f64, f64),
    band_shares: (f64, f64, f64),
    seed: u64,
}

impl TryFrom<RawPolicy> for SelectionPolicy {
    type Error = Error;
    fn try_from(r: RawPolicy) -> Result<Self> {
        SelectionPolicy::new(r.kind, r.band_edges, r.band_shares, r.seed)
    }
}

impl SelectionPolicy {
    pub fn new(kind: PolicyKind, band_edges: (f64, f64), band_shares: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (lo, hi) = band_edges;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Invalid(format!(
                "band edges must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
            )));
        }
        let (a, b, c) = band_shares;
        if [a, b, c].iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invalid(format!(
                "band shares must be non-negative, got ({a}, {b}, {c})"
            )));
        }
        if ((a + b + c) - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::Invalid(format!("band shares must sum to 1, got {}", a + b + c)));
        }
        Ok(Self {
            kind,
            band_edges,
            band_shares,
            seed,
        })
    }

    /// Default policy of the given kind: edges (0.2, 0.8), shares (0.1, 0.8, 0.1).
    pub fn with_defaults(kind: PolicyKind, seed: u64) -> Self {
        Self {
            kind,
            band_edges: DEFAULT_BAND_EDGES,
            band_shares: DEFAULT_BAND_SHARES,
            seed,
        }
    }

    pub fn band_of(&self, score: f64) -> Band {
        let (lo, hi) = self.band_edges;
        if score < lo {
            Band::Low
        } else if score <= hi {
            Band::Moderate
        } else {
            Band::High
        }
    }

    fn shares(&self) -> [f64; 3] {
        let (a, b, c) = self.band_shares;
        [a, b, c]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCounts {
    pub low: usize,
    pub moderate: usize,
    pub high: usize,
}

impl BandCounts {
    fn from_array(a: [usize; 3]) -> Self {
        Self {
            low: a[0],
            moderate: a[1],
            high: a[2],
        }
    }

    pub fn total(&self) -> usize {
        self.low + self.moderate + self.high
    }
}

/// A budgeted subset of instances with the policy that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPlan {
    /// Selected ids in lexicographic order.
    pub selected_ids: Vec<String>,
    pub budget_requested: usize,
    pub source_size: usize,
    pub policy: SelectionPolicy,
    /// Per-band counts; absent for random selection.
    pub per_band_counts: Option<BandCounts>,
    /// Set when length-heuristic selection fell back to random because all
    /// lengths were equal.
    pub degenerate_fallback: bool,
}

impl SelectionPlan {
    pub fn len(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_ids.is_empty()
    }
}

/// Difficulty-banded selection.
pub fn select_banded(d: &DifficultyVector, budget: usize, policy: &SelectionPolicy) -> Result<SelectionPlan> {
    if policy.kind != PolicyKind::Banded {
        return Err(Error::Selection(format!(
            "select_banded needs a banded policy, got {}",
            policy.kind.as_str()
        )));
    }
    check_budget(budget, d.len())?;
    let (selected_ids, counts) = banded_core(d.instance_ids(), d.scores(), budget, policy);
    Ok(SelectionPlan {
        selected_ids,
        budget_requested: budget,
        source_size: d.len(),
        policy: *policy,
        per_band_counts: Some(counts),
        degenerate_fallback: false,
    })
}

/// Uniform selection without replacement.
pub fn select_random(ids: &[String], budget: usize, seed: u64) -> Result<SelectionPlan> {
    check_budget(budget, ids.len())?;
    let mut sorted = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Selection("duplicate instance ids in selection input".into()));
    }
    let mut order: Vec<usize> = (0..sorted.len()).collect();
    order.shuffle(&mut rng::stream(seed, "random", 0));
    let mut selected: Vec<String> = order
        .into_iter()
        .take(budget.min(sorted.len()))
        .map(|i| sorted[i].clone())
        .collect();
    selected.sort();
    Ok(SelectionPlan {
        selected_ids: selected,
        budget_requested: budget,
        source_size: sorted.len(),
        policy: SelectionPolicy::with_defaults(PolicyKind::Random, seed),
        per_band_counts: None,
        degenerate_fallback: false,
    })
}

/// Banded selection over min-max normalized character length.
///
/// `policy` supplies edges, shares and seed; its kind is recorded as
/// `length_heuristic`. When every instance has the same length the
/// normalization is undefined and selection falls back to random.
pub fn select_length_heuristic(
    instances: &[InstanceRecord],
    budget: usize,
    policy: &SelectionPolicy,
) -> Result<SelectionPlan> {
    check_budget(budget, instances.len())?;
    let mut sorted: Vec<&InstanceRecord> = instances.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    if sorted.windows(2).any(|w| w[0].instance_id == w[1].instance_id) {
        return Err(Error::Selection("duplicate instance ids in selection input".into()));
    }
    let ids: Vec<String> = sorted.iter().map(|r| r.instance_id.clone()).collect();
    let recorded = SelectionPolicy {
        kind: PolicyKind::LengthHeuristic,
        ..*policy
    };

    let min = sorted.iter().map(|r| r.char_length).min().unwrap_or(0);
    let max = sorted.iter().map(|r| r.char_length).max().unwrap_or(0);
    if min == max {
        let mut plan = select_random(&ids, budget, policy.seed)?;
        plan.policy = recorded;
        plan.degenerate_fallback = true;
        return Ok(plan);
    }
    let span = (max - min) as f64;
    let scores: Vec<f64> = sorted.iter().map(|r| (r.char_length - min) as f64 / span).collect();
    let (selected_ids, counts) = banded_core(&ids, &scores, budget, &recorded);
    Ok(SelectionPlan {
        selected_ids,
        budget_requested: budget,
        source_size: ids.len(),
        policy: recorded,
        per_band_counts: Some(counts),
        degenerate_fallback: false,
    })
}

/// `floor(n * pct / 100)`; zero is a legitimate result for small sets.
pub fn budget_from_percentage(n: usize, pct: f64) -> Result<usize> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::Selection(format!("percentage must be in (0, 100], got {pct}")));
    }
    // The small slack absorbs representation error such as 0.07 * 100.
    Ok((n as f64 * pct / 100.0 + 1e-9).floor() as usize)
}

fn check_budget(budget: usize, n: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::Selection("budget must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Selection("cannot select from an empty instance set".into()));
    }
    Ok(())
}

/// `ids` sorted and aligned with `scores`.
fn banded_core(ids: &[String], scores: &[f64], budget: usize, policy: &SelectionPolicy) -> (Vec<String>, BandCounts) {
    let mut members: [Vec<usize>; 3] = Default::default();
    for (i, &s) in scores.iter().enumerate() {
        members[policy.band_of(s).index()].push(i);
    }
    for band in Band::ALL {
        members[band.index()].shuffle(&mut rng::stream(policy.seed, band.stream_label(), 0));
    }
    let capacity = [members[0].len(), members[1].len(), members[2].len()];
    let counts = allocate(budget.min(ids.len()), policy.shares(), capacity);

    let mut selected: Vec<String> = Band::ALL
        .iter()
        .flat_map(|b| members[b.index()][..counts[b.index()]].iter().map(|&i| ids[i].clone()))
        .collect();
    selected.sort();
    (selected, BandCounts::from_array(counts))
}

/// Hands out `total` units one at a time. Each unit goes to the band furthest
/// behind its share (ties: moderate, low, high). A full band spills to
/// moderate, then to whichever extreme band has more room left.
fn allocate(total: usize, shares: [f64; 3], capacity: [usize; 3]) -> [usize; 3] {
    const PRIORITY: [usize; 3] = [1, 0, 2];
    let mut counts = [0usize; 3];
    for step in 1..=total {
        let deficit = |b: usize| shares[b] * step as f64 - counts[b] as f64;
        let mut preferred = PRIORITY[0];
        for &b in &PRIORITY[1..] {
            if deficit(b) > deficit(preferred) + 1e-9 {
                preferred = b;
            }
        }
        let target = if counts[preferred] < capacity[preferred] {
            preferred
        } else if counts[1] < capacity[1] {
            1
        } else {
            let room = |b: usize| capacity[b] - counts[b];
            if room(0) >= room(2) {
                0
            } else {
                2
            }
        };
        counts[target] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TextField;

    fn uniform(n: usize) -> DifficultyVector {
        // (i + 0.5) / n keeps every score strictly inside its band.
        DifficultyVector::new(
            (0..n).map(|i| format!("i{i:04}")).collect(),
            (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
            vec![1; n],
        )
        .unwrap()
    }

    fn banded(seed: u64) -> SelectionPolicy {
        SelectionPolicy::with_defaults(PolicyKind::Banded, seed)
    }

    /// Counting oracle: round(budget * share) for the extremes, the
    /// remainder to moderate, clipped to band sizes.
    fn counting_oracle(scores: &[f64], budget: usize, policy: &SelectionPolicy) -> BandCounts {
        let sizes = Band::ALL.map(|b| scores.iter().filter(|&&s| policy.band_of(s) == b).count());
        let low = ((budget as f64 * policy.band_shares.0).round() as usize).min(sizes[0]);
        let high = ((budget as f64 * policy.band_shares.2).round() as usize).min(sizes[2]);
        BandCounts {
            low,
            moderate: budget - low - high,
            high,
        }
    }

    #[test]
    fn banded_counts_match_oracle_on_uniform_scores() {
        let d = uniform(100);
        let plan = select_banded(&d, 20, &banded(1)).unwrap();
        let expected = counting_oracle(d.scores(), 20, &banded(1));
        assert_eq!(
            expected,
            BandCounts {
                low: 2,
                moderate: 16,
                high: 2
            }
        );
        assert_eq!(plan.per_band_counts, Some(expected));
        assert_eq!(plan.len(), 20);
    }

    #[test]
    fn banded_matches_rounding_oracle_for_round_budgets() {
        let d = uniform(1000);
        for budget in [10, 20, 50, 100, 200, 500] {
            let plan = select_banded(&d, budget, &banded(3)).unwrap();
            assert_eq!(
                plan.per_band_counts,
                Some(counting_oracle(d.scores(), budget, &banded(3))),
                "budget {budget}"
            );
        }
    }

    #[test]
    fn banded_saturates() {
        let d = uniform(30);
        let plan = select_banded(&d, 500, &banded(0)).unwrap();
        assert_eq!(plan.len(), 30);
        assert_eq!(
            plan.per_band_counts,
            Some(BandCounts {
                low: 6,
                moderate: 18,
                high: 6
            })
        );
    }

    #[test]
    fn single_band_degenerate() {
        let d = DifficultyVector::new((0..40).map(|i| format!("{i}")).collect(), vec![0.5; 40], vec![1; 40]).unwrap();
        let plan = select_banded(&d, 10, &banded(9)).unwrap();
        assert_eq!(
            plan.per_band_counts,
            Some(BandCounts {
                low: 0,
                moderate: 10,
                high: 0
            })
        );
    }

    #[test]
    fn underfilled_band_spills_to_moderate_then_fuller_extreme() {
        assert_eq!(allocate(10, [0.5, 0.0, 0.5], [1, 3, 100]), [1, 3, 6]);
        assert_eq!(allocate(8, [0.1, 0.8, 0.1], [5, 2, 1]), [5, 2, 1]);
        // Moderate fills after two units; spill goes to whichever extreme has more room.
        assert_eq!(allocate(6, [0.1, 0.8, 0.1], [5, 2, 3]), [3, 2, 1]);
    }

    #[test]
    fn banded_errors() {
        let d = uniform(10);
        assert!(matches!(select_banded(&d, 0, &banded(0)), Err(Error::Selection(_))));
        let empty = DifficultyVector::new(vec![], vec![], vec![]).unwrap();
        assert!(matches!(select_banded(&empty, 1, &banded(0)), Err(Error::Selection(_))));
        let random = SelectionPolicy::with_defaults(PolicyKind::Random, 0);
        assert!(select_banded(&d, 1, &random).is_err());
    }

    #[test]
    fn random_selection_saturates_and_is_deterministic() {
        let ids: Vec<String> = (0..50).map(|i| format!("x{i}")).collect();
        assert_eq!(select_random(&ids, 80, 4).unwrap().len(), 50);
        assert_eq!(select_random(&ids, 7, 4).unwrap(), select_random(&ids, 7, 4).unwrap());
        assert_ne!(
            select_random(&ids, 7, 4).unwrap().selected_ids,
            select_random(&ids, 7, 5).unwrap().selected_ids
        );
        assert!(select_random(&[], 1, 0).is_err());
    }

    fn record(id: &str, len: usize) -> InstanceRecord {
        InstanceRecord::new(id, vec![TextField::new("text", "x".repeat(len))], "l", "test")
    }

    #[test]
    fn length_heuristic_uses_normalized_lengths() {
        let records: Vec<InstanceRecord> = (0..100).map(|i| record(&format!("r{i:03}"), 10 + i * 10)).collect();
        let policy = banded(2);
        let plan = select_length_heuristic(&records, 20, &policy).unwrap();
        let normalized: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        assert_eq!(plan.per_band_counts, Some(counting_oracle(&normalized, 20, &policy)));
        assert_eq!(plan.policy.kind, PolicyKind::LengthHeuristic);
        assert!(!plan.degenerate_fallback);
    }

    #[test]
    fn length_heuristic_edge_cases() {
        let one = vec![record("only", 5)];
        assert_eq!(
            select_length_heuristic(&one, 1, &banded(0)).unwrap().selected_ids,
            vec!["only".to_string()]
        );

        let same: Vec<InstanceRecord> = (0..12).map(|i| record(&format!("s{i}"), 40)).collect();
        let plan = select_length_heuristic(&same, 5, &banded(0)).unwrap();
        assert_eq!(plan.len(), 5);
        assert!(plan.degenerate_fallback);
    }

    #[test]
    fn budget_percentages() {
        assert_eq!(budget_from_percentage(10_000, 0.5).unwrap(), 50);
        assert_eq!(budget_from_percentage(100, 100.0).unwrap(), 100);
        assert_eq!(budget_from_percentage(50, 1.0).unwrap(), 0);
        assert_eq!(budget_from_percentage(100, 7.0).unwrap(), 7);
        assert!(budget_from_percentage(100, 0.0).is_err());
        assert!(budget_from_percentage(100, 100.5).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(SelectionPolicy::new(PolicyKind::Banded, (0.5, 0.5), DEFAULT_BAND_SHARES, 0).is_err());
        assert!(SelectionPolicy::new(PolicyKind::Banded, (0.2, 0.8), (0.2, 0.2, 0.2), 0).is_err());
        assert!(SelectionPolicy::new(PolicyKind::Banded, (0.2, 0.8), (-0.1, 1.0, 0.1), 0).is_err());
        let d = SelectionPolicy::with_defaults(PolicyKind::Banded, 0);
        assert!(d.band_shares.1 > d.band_shares.0 && d.band_shares.1 > d.band_shares.2);
        assert_eq!(d.band_of(0.2), Band::Moderate);
        assert_eq!(d.band_of(0.8), Band::Moderate);
        assert_eq!(d.band_of(0.19), Band::Low);
        assert_eq!(d.band_of(0.81), Band::High);
    }

    fn inclusion_counts(resamples: u64) -> Vec<u32> {
        let ids: Vec<String> = (0..1000).map(|i| format!("i{i:04}")).collect();
        let mut hits = vec![0u32; ids.len()];
        for seed in 0..resamples {
            for id in select_random(&ids, 10, seed).unwrap().selected_ids {
                hits[id[1..].parse::<usize>().unwrap()] += 1;
            }
        }
        hits
    }

    // A simultaneous +/-0.003 band over 1000 ids sits near 3 binomial
    // standard deviations per id, so roughly 2-3 ids fall outside it for a
    // perfectly uniform sampler. Kept at the stated tolerance; run with
    // `--ignored` to see which ids miss.
    #[test]
    #[ignore = "per-id +/-0.003 band is exceeded by chance for about 0.26% of ids"]
    fn random_inclusion_frequency_is_uniform() {
        let resamples = 10_000;
        let hits = inclusion_counts(resamples);
        let outside: Vec<(usize, f64)> = hits
            .iter()
            .enumerate()
            .map(|(i, &h)| (i, h as f64 / resamples as f64))
            .filter(|(_, f)| (f - 0.01).abs() > 0.003)
            .collect();
        assert!(outside.is_empty(), "ids outside 0.01 +/- 0.003: {outside:?}");
    }

    #[test]
    fn random_inclusion_counts_pass_chi_square() {
        let hits = inclusion_counts(10_000);
        assert_eq!(hits.iter().sum::<u32>(), 100_000);
        // Each id is included with p = 0.01; variance per count is 10000 p (1 - p).
        let var = 10_000.0 * 0.01 * 0.99;
        let stat: f64 = hits.iter().map(|&h| (h as f64 - 100.0).powi(2) / var).sum();
        // 999 degrees of freedom; mean 999, sd about 44.7. Reject beyond 5 sd.
        assert!(
            (stat - 999.0).abs() < 5.0 * (2.0f64 * 999.0).sqrt(),
            "chi-square {stat}"
        );
        let worst = hits
            .iter()
            .map(|&h| (h as f64 / 10_000.0 - 0.01).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.005, "largest deviation {worst}");
    }

    proptest::proptest! {
        #[test]
        fn banded_coverage_is_monotone_in_budget(
            scores in proptest::collection::vec(0.0..=1.0f64, 1..120),
            seed in 0u64..1000,
        ) {
            let n = scores.len();
            let d = DifficultyVector::new((0..n).map(|i| format!("i{i:04}")).collect(), scores, vec![1; n]).unwrap();
            let policy = banded(seed);
            let mut previous: Vec<String> = Vec::new();
            for budget in 1..=n {
                let plan = select_banded(&d, budget, &policy).unwrap();
                proptest::prop_assert_eq!(plan.len(), budget);
                proptest::prop_assert!(previous.iter().all(|id| plan.selected_ids.binary_search(id).is_ok()));
                previous = plan.selected_ids;
            }
        }
    }
}
