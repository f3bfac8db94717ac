//! Synthetic Rasch-model world used as ground truth.
//!
//! Each instance has a latent difficulty `b` and each model an ability `a`;
//! a model answers correctly with probability `sigmoid(a - b)`. Ensemble
//! members get their ability from their training configuration, candidates
//! from an evenly spaced grid. Mislabeled instances invert the outcome: a
//! model that "knows" the answer disagrees with the stored gold label.
//!
//! All randomness is drawn from per-instance streams, so changing one
//! instance (hardening, relabeling) leaves every other draw untouched.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::difficulty::{ConfigKind, EnsembleManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::rng;
use crate::types::{ConfidenceMatrix, CorrectnessMatrix, InstanceRecord, TextField};

/// Gold labels of synthetic instances.
pub const LABELS: [&str; 3] = ["contradiction", "entailment", "neutral"];

/// Shallow cue word per label; easy synthetic instances contain their
/// label's cue.
pub const CUE_WORDS: [(&str, &str); 3] = [
    ("contradiction", "never"),
    ("entailment", "definitely"),
    ("neutral", "perhaps"),
];

const FILLER: [&str; 32] = [
    "a", "man", "woman", "child", "dog", "park", "street", "is", "was", "walking", "holding", "near", "the", "red",
    "blue", "small", "large", "old", "young", "group", "people", "outside", "inside", "table", "ball", "car", "river",
    "while", "with", "two", "three", "some",
];

/// Latent difficulty is drawn from `Normal(mean, std)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSpec {
    pub mean: f64,
    pub std: f64,
}

/// Candidate `k` of `K` gets `center + spread * (k/(K-1) - 1/2)` plus
/// `Normal(0, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateGrid {
    pub center: f64,
    pub spread: f64,
    pub jitter: f64,
}

/// Ensemble member ability:
/// `base + data_gain * ln(data% / 100) + epoch_gain * min(epoch, epoch_saturation)
///  - corruption_penalty * corrupt% / 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleAbility {
    pub base: f64,
    pub data_gain: f64,
    pub epoch_gain: f64,
    pub epoch_saturation: u32,
    pub corruption_penalty: f64,
}

impl EnsembleAbility {
    pub fn ability(&self, entry: &ManifestEntry) -> f64 {
        let (data, corruption) = match entry.kind {
            ConfigKind::PartialData => (entry.fraction, 0.0),
            ConfigKind::CorruptedData => (100.0, entry.fraction),
        };
        self.base
            + self.data_gain * (data / 100.0).ln()
            + self.epoch_gain * f64::from(entry.epoch.min(self.epoch_saturation))
            - self.corruption_penalty * corruption / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldParams {
    pub n_instances: usize,
    pub n_candidates: usize,
    pub difficulty: LatentSpec,
    pub candidates: CandidateGrid,
    pub ensemble: EnsembleAbility,
    /// Standard deviation of Gaussian noise added to ensemble confidences.
    pub noise_sd: f64,
    /// Confidences are clipped to `[clip_eps, 1 - clip_eps]`.
    pub clip_eps: f64,
    /// Probability that an instance carries a wrong gold label.
    pub mislabel_rate: f64,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            n_instances: 2000,
            n_candidates: 27,
            difficulty: LatentSpec { mean: 0.0, std: 1.0 },
            candidates: CandidateGrid {
                center: 2.0,
                spread: 2.0,
                jitter: 0.1,
            },
            ensemble: EnsembleAbility {
                base: 2.0,
                data_gain: 0.6,
                epoch_gain: 0.2,
                epoch_saturation: 5,
                corruption_penalty: 3.0,
            },
            noise_sd: 0.05,
            clip_eps: 0.01,
            mislabel_rate: 0.0,
            seed: 0,
        }
    }
}

impl WorldParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scales = [
            ("difficulty.std", self.difficulty.std),
            ("candidates.spread", self.candidates.spread),
            ("candidates.jitter", self.candidates.jitter),
            ("ensemble.data_gain", self.ensemble.data_gain),
            ("ensemble.epoch_gain", self.ensemble.epoch_gain),
            ("ensemble.corruption_penalty", self.ensemble.corruption_penalty),
            ("noise_sd", self.noise_sd),
        ];
        if let Some((name, v)) = scales.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
        if !(self.difficulty.mean.is_finite() && self.candidates.center.is_finite() && self.ensemble.base.is_finite()) {
            return Err(Error::Invalid("world location parameters must be finite".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Invalid(format!(
                "clip_eps must be in (0, 0.5), got {}",
                self.clip_eps
            )));
        }
        if !(0.0..=1.0).contains(&self.mislabel_rate) {
            return Err(Error::Invalid(format!(
                "mislabel_rate must be in [0, 1], got {}",
                self.mislabel_rate
            )));
        }
        Ok(())
    }
}

/// A generated world with its latent values exposed for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub params: WorldParams,
    pub instance_ids: Vec<String>,
    pub latent_difficulty: Vec<f64>,
    pub mislabeled: Vec<bool>,
    pub candidate_ids: Vec<String>,
    pub candidate_ability: Vec<f64>,
}

pub fn instance_id(index: usize) -> String {
    format!("inst-{index:06}")
}

pub fn candidate_id(index: usize) -> String {
    format!("cand-{index:03}")
}

fn ood_instance_id(index: usize) -> String {
    format!("ood-{index:06}")
}

pub fn gen_world(params: &WorldParams) -> Result<World> {
    params.validate()?;
    let n = params.n_instances;
    let mut latent_difficulty = Vec::with_capacity(n);
    let mut mislabeled = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(params.seed, "latent", i as u64);
        let z: f64 = r.sample(StandardNormal);
        latent_difficulty.push(params.difficulty.mean + params.difficulty.std * z);
        mislabeled.push(r.random::<f64>() < params.mislabel_rate);
    }

    let k = params.n_candidates;
    let grid = &params.candidates;
    let candidate_ability = (0..k)
        .map(|c| {
            let pos = if k > 1 { c as f64 / (k - 1) as f64 - 0.5 } else { 0.0 };
            let z: f64 = rng::stream(params.seed, "ability", c as u64).sample(StandardNormal);
            grid.center + grid.spread * pos + grid.jitter * z
        })
        .collect();

    Ok(World {
        params: params.clone(),
        instance_ids: (0..n).map(instance_id).collect(),
        latent_difficulty,
        mislabeled,
        candidate_ids: (0..k).map(candidate_id).collect(),
        candidate_ability,
    })
}

impl World {
    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    /// Ability of every manifest entry, in manifest order.
    pub fn ensemble_abilities(&self, manifest: &EnsembleManifest) -> Vec<f64> {
        manifest
            .entries()
            .iter()
            .map(|e| self.params.ensemble.ability(e))
            .collect()
    }

    /// Copy with the latent difficulty of `ids` raised by `shift`.
    pub fn harden(&self, ids: &[String], shift: f64) -> World {
        let mut out = self.clone();
        for id in ids {
            if let Ok(i) = self.instance_ids.binary_search(id) {
                out.latent_difficulty[i] += shift;
            }
        }
        out
    }

    /// Copy with the gold labels of `ids` corrected.
    pub fn repair_labels(&self, ids: &[String]) -> World {
        let mut out = self.clone();
        for id in ids {
            if let Ok(i) = self.instance_ids.binary_search(id) {
                out.mislabeled[i] = false;
            }
        }
        out
    }
}

/// Gold-answer confidence of every manifest entry on every instance.
///
/// `c = clip(p + Normal(0, noise_sd), eps, 1 - eps)` with
/// `p = sigmoid(a_m - b_i)`, or `1 - p` for a mislabeled instance.
pub fn gen_ensemble_confidences(world: &World, manifest: &EnsembleManifest) -> Result<ConfidenceMatrix> {
    let abilities = world.ensemble_abilities(manifest);
    let (n, m) = (world.n_instances(), abilities.len());
    let p = &world.params;
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(p.seed, "ensemble", i as u64);
        let b = world.latent_difficulty[i];
        let col: Vec<f64> = abilities
            .iter()
            .map(|&a| {
                let noise: f64 = r.sample(StandardNormal);
                let prob = sigmoid(a - b);
                let prob = if world.mislabeled[i] { 1.0 - prob } else { prob };
                (prob + p.noise_sd * noise).clamp(p.clip_eps, 1.0 - p.clip_eps)
            })
            .collect();
        columns.push(col);
    }
    let mut values = Vec::with_capacity(n * m);
    for row in 0..m {
        values.extend(columns.iter().map(|c| c[row]));
    }
    let model_ids = manifest.entries().iter().map(ManifestEntry::run_id).collect();
    ConfidenceMatrix::new(model_ids, world.instance_ids.clone(), values, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessMode {
    /// Bernoulli draws with probability `sigmoid(a - b)`.
    Stochastic,
    /// Correct exactly when `a > b`.
    Deterministic,
}

pub fn gen_candidate_correctness(world: &World, mode: CorrectnessMode) -> Result<CorrectnessMatrix> {
    correctness(
        &world.candidate_ability,
        &world.candidate_ids,
        &world.instance_ids,
        &world.latent_difficulty,
        &world.mislabeled,
        world.params.seed,
        "candidates",
        mode,
    )
}

/// Correctness of the same candidates on a fresh instance set whose latent
/// difficulty is drawn from the in-domain law and shifted by `shift`.
pub fn gen_ood(world: &World, shift: f64, mode: CorrectnessMode) -> Result<CorrectnessMatrix> {
    if !shift.is_finite() {
        return Err(Error::Invalid(format!("OOD shift must be finite, got {shift}")));
    }
    let p = &world.params;
    let n = p.n_instances;
    let latent: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = rng::stream(p.seed, "ood-latent", i as u64).sample(StandardNormal);
            p.difficulty.mean + p.difficulty.std * z + shift
        })
        .collect();
    let ids: Vec<String> = (0..n).map(ood_instance_id).collect();
    correctness(
        &world.candidate_ability,
        &world.candidate_ids,
        &ids,
        &latent,
        &vec![false; n],
        p.seed,
        "ood-candidates",
        mode,
    )
}

#[allow(clippy::too_many_arguments)]
fn correctness(
    abilities: &[f64],
    candidate_ids: &[String],
    instance_ids: &[String],
    latent: &[f64],
    mislabeled: &[bool],
    seed: u64,
    stream: &str,
    mode: CorrectnessMode,
) -> Result<CorrectnessMatrix> {
    let (k, n) = (abilities.len(), instance_ids.len());
    let mut cells = vec![false; k * n];
    for i in 0..n {
        let mut r = rng::stream(seed, stream, i as u64);
        for (c, &a) in abilities.iter().enumerate() {
            let knows = match mode {
                CorrectnessMode::Stochastic => r.random::<f64>() < sigmoid(a - latent[i]),
                CorrectnessMode::Deterministic => a > latent[i],
            };
            cells[c * n + i] = knows != mislabeled[i];
        }
    }
    CorrectnessMatrix::new(candidate_ids.to_vec(), instance_ids.to_vec(), cells)
}

/// Synthetic NLI-style records for the world's instances.
///
/// Text length grows with latent difficulty, and instances easier than
/// `b < -0.5` carry the cue word of their true label in the hypothesis.
/// Mislabeled instances store a gold label different from the true one.
pub fn gen_instances(world: &World) -> Vec<InstanceRecord> {
    (0..world.n_instances())
        .map(|i| {
            let mut r = rng::stream(world.params.seed, "text", i as u64);
            let b = world.latent_difficulty[i];
            let true_label = r.random_range(0..LABELS.len());
            let gold = if world.mislabeled[i] {
                (true_label + r.random_range(1..LABELS.len())) % LABELS.len()
            } else {
                true_label
            };
            let premise_len = (10.0 + 3.0 * b + 2.0 * r.sample::<f64, _>(StandardNormal))
                .round()
                .max(3.0) as usize;
            let hypothesis_len = r.random_range(3..8);
            let mut words = |count: usize| {
                (0..count)
                    .map(|_| FILLER[r.random_range(0..FILLER.len())])
                    .collect::<Vec<_>>()
            };
            let premise = words(premise_len).join(" ");
            let mut hypothesis = words(hypothesis_len);
            if b < -0.5 {
                hypothesis.insert(hypothesis.len() / 2, cue_for(LABELS[true_label]));
            }
            InstanceRecord::new(
                world.instance_ids[i].clone(),
                vec![
                    TextField::new("premise", premise),
                    TextField::new("hypothesis", hypothesis.join(" ")),
                ],
                LABELS[gold],
                "test",
            )
        })
        .collect()
}

/// Cue word for `label`; labels outside [`CUE_WORDS`] act as their own cue.
pub fn cue_for(label: &str) -> &str {
    CUE_WORDS
        .iter()
        .find(|(l, _)| *l == label)
        .map_or(label, |(_, cue)| cue)
}

/// Deterministic shallow-cue classifier.
///
/// The logit of each label is `cue_weight * (occurrences of its cue word)`
/// plus a text-hashed jitter in `[0, jitter)`. With `cue_weight > jitter` a
/// single cue decides the prediction; without cues the jitter does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuePredictor {
    pub seed: u64,
    pub cue_weight: f64,
    pub jitter: f64,
}

impl CuePredictor {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cue_weight: 2.0,
            jitter: 1.0,
        }
    }

    /// Raw logits per label.
    pub fn logits(&self, text_fields: &[TextField], labels: &[String]) -> Vec<f64> {
        let joined: String = text_fields
            .iter()
            .map(|f| f.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let tokens: Vec<String> = joined
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        let text_key = rng::derive_seed(self.seed, &joined, 0);
        labels
            .iter()
            .map(|label| {
                let cue = cue_for(label).to_lowercase();
                let hits = tokens.iter().filter(|t| **t == cue).count() as f64;
                let u: f64 = rng::stream(text_key, label, 0).random();
                self.cue_weight * hits + self.jitter * u
            })
            .collect()
    }

    /// Softmax probabilities per label and the arg-max label.
    pub fn predict(&self, text_fields: &[TextField], labels: &[String]) -> Result<(Vec<f64>, String)> {
        if labels.is_empty() {
            return Err(Error::Invalid("predictor needs at least one candidate label".into()));
        }
        let logits = self.logits(text_fields, labels);
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = exp.iter().sum();
        let probs: Vec<f64> = exp.iter().map(|e| e / total).collect();
        let best = logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &l)| if l > logits[best] { i } else { best });
        Ok((probs, labels[best].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::accuracy;
    use crate::difficulty::build_manifest;

    fn small(seed: u64) -> WorldParams {
        WorldParams {
            n_instances: 300,
            seed,
            ..WorldParams::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        assert_eq!(gen_world(&small(3)).unwrap(), gen_world(&small(3)).unwrap());
        assert_ne!(gen_world(&small(3)).unwrap(), gen_world(&small(4)).unwrap());
    }

    #[test]
    fn empty_world() {
        let w = gen_world(&WorldParams {
            n_instances: 0,
            ..WorldParams::default()
        })
        .unwrap();
        assert_eq!(w.n_instances(), 0);
        assert_eq!(
            gen_candidate_correctness(&w, CorrectnessMode::Stochastic)
                .unwrap()
                .n_instances(),
            0
        );
    }

    #[test]
    fn invalid_params() {
        let bad = |f: fn(&mut WorldParams)| {
            let mut p = WorldParams::default();
            f(&mut p);
            gen_world(&p).is_err()
        };
        assert!(bad(|p| p.clip_eps = 0.5));
        assert!(bad(|p| p.clip_eps = 0.0));
        assert!(bad(|p| p.noise_sd = -0.1));
        assert!(bad(|p| p.difficulty.std = f64::NAN));
        assert!(bad(|p| p.mislabel_rate = 1.5));
    }

    fn one_instance_world(b: f64) -> World {
        World {
            params: WorldParams {
                n_instances: 1,
                n_candidates: 1,
                noise_sd: 0.0,
                ..WorldParams::default()
            },
            instance_ids: vec![instance_id(0)],
            latent_difficulty: vec![b],
            mislabeled: vec![false],
            candidate_ids: vec![candidate_id(0)],
            candidate_ability: vec![b],
        }
    }

    #[test]
    fn logistic_midpoint_and_clip() {
        let manifest = build_manifest(&[100.0], &[], 1).unwrap();
        let entry = manifest.entries()[0];
        let mut w = one_instance_world(0.0);
        w.latent_difficulty[0] = w.params.ensemble.ability(&entry);
        let c = gen_ensemble_confidences(&w, &manifest).unwrap();
        assert_eq!(c.get(0, 0), Some(0.5));

        w.latent_difficulty[0] = -1e3;
        let c = gen_ensemble_confidences(&w, &manifest).unwrap();
        assert_eq!(c.get(0, 0), Some(1.0 - w.params.clip_eps));
    }

    #[test]
    fn candidate_midpoint_probability() {
        // sigmoid(a - b) at a == b
        assert_eq!(sigmoid(0.0), 0.5);
        let w = one_instance_world(0.3);
        let v = gen_candidate_correctness(&w, CorrectnessMode::Deterministic).unwrap();
        assert!(!v.row(0)[0], "a == b is not strictly above the threshold");
    }

    #[test]
    fn confidence_non_decreasing_in_data_fraction() {
        let w = gen_world(&WorldParams {
            noise_sd: 0.0,
            ..small(1)
        })
        .unwrap();
        let fractions = [5.0, 10.0, 15.0, 20.0, 25.0, 50.0, 100.0];
        for epoch in 1..=3 {
            let mut previous: Option<Vec<f64>> = None;
            for &f in &fractions {
                let m = build_manifest(&[f], &[], epoch).unwrap();
                let conf = gen_ensemble_confidences(&w, &m).unwrap();
                let row = conf
                    .model_ids()
                    .iter()
                    .position(|id| id.ends_with(&format!("ep{epoch:02}")))
                    .unwrap();
                let current: Vec<f64> = (0..conf.n_instances()).map(|i| conf.get(row, i).unwrap()).collect();
                if let Some(prev) = &previous {
                    assert!(prev.iter().zip(&current).all(|(p, c)| c >= p));
                }
                previous = Some(current);
            }
        }
    }

    #[test]
    fn deterministic_mode_all_correct_when_able() {
        let mut w = gen_world(&small(2)).unwrap();
        let top = w.latent_difficulty.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.candidate_ability[0] = top + 1.0;
        let v = gen_candidate_correctness(&w, CorrectnessMode::Deterministic).unwrap();
        assert!(v.row(0).iter().all(|&c| c));
    }

    #[test]
    fn deterministic_mode_counts_latents_below_ability() {
        let mut w = gen_world(&small(5)).unwrap();
        let mut sorted = w.latent_difficulty.clone();
        sorted.sort_by(f64::total_cmp);
        let median = (sorted[149] + sorted[150]) / 2.0;
        w.candidate_ability[0] = median;
        let v = gen_candidate_correctness(&w, CorrectnessMode::Deterministic).unwrap();
        let below = w.latent_difficulty.iter().filter(|&&b| b < median).count() as f64 / 300.0;
        assert_eq!(accuracy(v.row(0)).unwrap(), below);
    }

    #[test]
    fn stochastic_accuracy_concentrates() {
        let w = gen_world(&WorldParams {
            n_instances: 10_000,
            ..WorldParams::with_seed(11)
        })
        .unwrap();
        let v = gen_candidate_correctness(&w, CorrectnessMode::Stochastic).unwrap();
        for k in 0..w.candidate_ids.len() {
            let expected = w
                .latent_difficulty
                .iter()
                .map(|b| sigmoid(w.candidate_ability[k] - b))
                .sum::<f64>()
                / 10_000.0;
            assert!((accuracy(v.row(k)).unwrap() - expected).abs() <= 0.02);
        }
    }

    #[test]
    fn harder_ood_lowers_accuracy() {
        let w = gen_world(&WorldParams {
            n_instances: 3000,
            ..WorldParams::with_seed(8)
        })
        .unwrap();
        let in_domain = gen_candidate_correctness(&w, CorrectnessMode::Deterministic).unwrap();
        let ood = gen_ood(&w, 1.0, CorrectnessMode::Deterministic).unwrap();
        for k in 0..w.candidate_ids.len() {
            assert!(accuracy(ood.row(k)).unwrap() <= accuracy(in_domain.row(k)).unwrap());
        }
        let far = gen_ood(&w, 1e3, CorrectnessMode::Stochastic).unwrap();
        assert!((0..far.n_candidates()).all(|k| accuracy(far.row(k)).unwrap() == 0.0));
    }

    #[test]
    fn hardening_only_removes_correct_answers() {
        let w = gen_world(&small(6)).unwrap();
        let ids: Vec<String> = w.instance_ids[..20].to_vec();
        let before = gen_candidate_correctness(&w, CorrectnessMode::Stochastic).unwrap();
        let after = gen_candidate_correctness(&w.harden(&ids, 3.0), CorrectnessMode::Stochastic).unwrap();
        for k in 0..before.n_candidates() {
            for i in 0..before.n_instances() {
                let (b, a) = (before.row(k)[i], after.row(k)[i]);
                if i >= 20 {
                    assert_eq!(a, b);
                } else {
                    assert!(b || !a);
                }
            }
        }
    }

    #[test]
    fn repairing_labels_flips_correctness() {
        let w = gen_world(&WorldParams {
            mislabel_rate: 0.2,
            ..small(9)
        })
        .unwrap();
        let bad: Vec<String> = w
            .instance_ids
            .iter()
            .zip(&w.mislabeled)
            .filter(|(_, m)| **m)
            .map(|(id, _)| id.clone())
            .collect();
        assert!(!bad.is_empty());
        let before = gen_candidate_correctness(&w, CorrectnessMode::Stochastic).unwrap();
        let after = gen_candidate_correctness(&w.repair_labels(&bad), CorrectnessMode::Stochastic).unwrap();
        for i in 0..before.n_instances() {
            let flipped = w.mislabeled[i];
            for k in 0..before.n_candidates() {
                assert_eq!(before.row(k)[i] != after.row(k)[i], flipped);
            }
        }
    }

    #[test]
    fn easy_instances_carry_their_cue() {
        let w = gen_world(&small(4)).unwrap();
        let records = gen_instances(&w);
        let predictor = CuePredictor::new(0);
        let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        for (r, &b) in records.iter().zip(&w.latent_difficulty) {
            if b < -0.5 {
                let (_, predicted) = predictor.predict(&r.text_fields, &labels).unwrap();
                assert_eq!(predicted, r.gold_label);
            }
        }
    }

    #[test]
    fn cue_predictor_probabilities() {
        let p = CuePredictor::new(3);
        let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        let text = vec![TextField::new("h", "they never left")];
        let (probs, predicted) = p.predict(&text, &labels).unwrap();
        assert_eq!(predicted, "contradiction");
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.predict(&text, &labels).unwrap(), (probs, predicted));
        assert!(p.predict(&text, &[]).is_err());
    }
}
