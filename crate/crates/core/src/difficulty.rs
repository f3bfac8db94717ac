//! Ensemble training schedules and difficulty scoring.
//!
//! An ensemble is trained over two axes, partial training data and label
//! corruption, with a checkpoint kept after every epoch. The difficulty of an
//! instance is one minus the mean confidence the ensemble assigns to its gold
//! answer.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ConfidenceMatrix, DifficultyVector};

pub const DEFAULT_DATA_FRACTIONS: [f64; 7] = [5.0, 10.0, 15.0, 20.0, 25.0, 50.0, 100.0];
pub const DEFAULT_CORRUPTION_FRACTIONS: [f64; 5] = [2.0, 5.0, 10.0, 20.0, 25.0];
pub const DEFAULT_EPOCHS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigKind {
    /// Trained on a random `fraction` percent of the training set.
    PartialData,
    /// Trained on the full set with `fraction` percent of labels corrupted.
    CorruptedData,
}

impl ConfigKind {
    fn prefix(self) -> &'static str {
        match self {
            ConfigKind::PartialData => "partial",
            ConfigKind::CorruptedData => "corrupt",
        }
    }
}

/// One checkpoint of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub kind: ConfigKind,
    pub fraction: f64,
    pub epoch: u32,
}

impl ManifestEntry {
    /// Deterministic run name, e.g. `partial_050_ep03` or `corrupt_002p5_ep10`.
    pub fn run_id(&self) -> String {
        format!(
            "{}_{}_ep{:02}",
            self.kind.prefix(),
            fraction_tag(self.fraction),
            self.epoch
        )
    }

    fn key(&self) -> (ConfigKind, u64, u32) {
        (self.kind, self.fraction.to_bits(), self.epoch)
    }
}

fn fraction_tag(fraction: f64) -> String {
    if fraction.fract() == 0.0 {
        format!("{:03}", fraction as u64)
    } else {
        let whole = fraction.trunc() as u64;
        let frac = format!("{}", fraction.fract());
        format!("{whole:03}p{}", frac.trim_start_matches("0."))
    }
}

impl fmt::Display for ManifestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.run_id())
    }
}

/// Declarative schedule of ensemble training runs for an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct EnsembleManifest {
    data_fractions: Vec<f64>,
    corruption_fractions: Vec<f64>,
    epochs: u32,
    entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    data_fractions: Vec<f64>,
    corruption_fractions: Vec<f64>,
    epochs: u32,
    entries: Vec<ManifestEntry>,
}

impl TryFrom<RawManifest> for EnsembleManifest {
    type Error = Error;

    fn try_from(raw: RawManifest) -> Result<Self> {
        let manifest = build_manifest(&raw.data_fractions, &raw.corruption_fractions, raw.epochs)?;
        let expected: HashSet<_> = manifest.entries.iter().map(ManifestEntry::key).collect();
        let given: HashSet<_> = raw.entries.iter().map(ManifestEntry::key).collect();
        if raw.entries.len() != manifest.entries.len() || expected != given {
            return Err(Error::Manifest(
                "entries do not match the product of fractions and epochs".into(),
            ));
        }
        Ok(manifest)
    }
}

impl EnsembleManifest {
    pub fn data_fractions(&self) -> &[f64] {
        &self.data_fractions
    }

    pub fn corruption_fractions(&self) -> &[f64] {
        &self.corruption_fractions
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, kind: ConfigKind, fraction: f64, epoch: u32) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.fraction == fraction && e.epoch == epoch)
    }
}

impl Default for EnsembleManifest {
    fn default() -> Self {
        build_manifest(&DEFAULT_DATA_FRACTIONS, &DEFAULT_CORRUPTION_FRACTIONS, DEFAULT_EPOCHS)
            .expect("default manifest is valid")
    }
}

/// Enumerates every (configuration, epoch) checkpoint.
///
/// Data fractions must lie in `(0, 100]`, corruption fractions in `(0, 100)`,
/// and `epochs >= 1`. Repeated fractions are rejected.
pub fn build_manifest(data_fractions: &[f64], corruption_fractions: &[f64], epochs: u32) -> Result<EnsembleManifest> {
    if epochs == 0 {
        return Err(Error::Manifest("epochs must be at least 1".into()));
    }
    check_fractions(data_fractions, "data", |f| f > 0.0 && f <= 100.0, "(0, 100]")?;
    check_fractions(corruption_fractions, "corruption", |f| f > 0.0 && f < 100.0, "(0, 100)")?;

    let configs = data_fractions
        .iter()
        .map(|&f| (ConfigKind::PartialData, f))
        .chain(corruption_fractions.iter().map(|&f| (ConfigKind::CorruptedData, f)));
    let entries = configs
        .flat_map(|(kind, fraction)| (1..=epochs).map(move |epoch| ManifestEntry { kind, fraction, epoch }))
        .collect();
    Ok(EnsembleManifest {
        data_fractions: data_fractions.to_vec(),
        corruption_fractions: corruption_fractions.to_vec(),
        epochs,
        entries,
    })
}

fn check_fractions(values: &[f64], what: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for &f in values {
        if !ok(f) {
            return Err(Error::Manifest(format!("{what} fraction {f} is outside {range}")));
        }
        if !seen.insert(f.to_bits()) {
            return Err(Error::Manifest(format!("{what} fraction {f} is listed twice")));
        }
    }
    Ok(())
}

/// Scores each instance as `1 - mean(present confidences)`.
///
/// Confidences are summed in model-id order, so the result does not depend on
/// the row order the matrix was built from.
pub fn compute_difficulty(conf: &ConfidenceMatrix) -> DifficultyVector {
    let n = conf.n_instances();
    let mut scores = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        let (sum, count) = conf.column(i).fold((0.0_f64, 0_u32), |(s, c), v| (s + v, c + 1));
        // Construction guarantees count >= 1.
        let score = 1.0 - sum / f64::from(count);
        scores.push(score.clamp(0.0, 1.0));
        counts.push(count);
    }
    DifficultyVector::new(conf.instance_ids().to_vec(), scores, counts)
        .expect("scores derived from a valid matrix are valid")
}

/// Equal-width histogram of difficulty over `[0,1]`; the last bin is closed.
pub fn difficulty_histogram(d: &DifficultyVector, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::Invalid("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    for &s in d.scores() {
        counts[bin_index(s, bins)] += 1;
    }
    Ok(counts)
}

/// Bin of `score` among `bins` equal-width bins over `[0,1]`.
pub fn bin_index(score: f64, bins: usize) -> usize {
    ((score * bins as f64).floor() as usize).min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> ConfidenceMatrix {
        let models = (0..rows.len()).map(|m| format!("m{m}")).collect();
        let instances = (0..rows[0].len()).map(|i| format!("i{i}")).collect();
        ConfidenceMatrix::from_rows(models, instances, rows).unwrap()
    }

    #[test]
    fn default_manifest_has_120_entries() {
        let m = EnsembleManifest::default();
        assert_eq!(m.len(), 120);
        assert_eq!(m.data_fractions().len(), 7);
        assert_eq!(m.corruption_fractions().len(), 5);
    }

    #[test]
    fn manifest_sizes() {
        assert_eq!(build_manifest(&[100.0], &[], 1).unwrap().len(), 1);
        // 3 epochs x (2 data + 1 corruption)
        assert_eq!(build_manifest(&[50.0, 25.0], &[10.0], 3).unwrap().len(), 9);
    }

    #[test]
    fn manifest_rejects_bad_fractions() {
        assert!(matches!(build_manifest(&[0.0], &[], 1), Err(Error::Manifest(_))));
        assert!(matches!(build_manifest(&[101.0], &[], 1), Err(Error::Manifest(_))));
        assert!(matches!(build_manifest(&[50.0], &[100.0], 1), Err(Error::Manifest(_))));
        assert!(matches!(build_manifest(&[50.0, 50.0], &[], 1), Err(Error::Manifest(_))));
        assert!(matches!(build_manifest(&[50.0], &[], 0), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_entries_are_unique() {
        let m = EnsembleManifest::default();
        let names: HashSet<_> = m.entries().iter().map(ManifestEntry::run_id).collect();
        assert_eq!(names.len(), m.len());
    }

    #[test]
    fn run_ids() {
        let e = ManifestEntry {
            kind: ConfigKind::PartialData,
            fraction: 50.0,
            epoch: 3,
        };
        assert_eq!(e.run_id(), "partial_050_ep03");
        let e = ManifestEntry {
            kind: ConfigKind::CorruptedData,
            fraction: 2.5,
            epoch: 10,
        };
        assert_eq!(e.run_id(), "corrupt_002p5_ep10");
    }

    #[test]
    fn difficulty_endpoints_and_mean() {
        let d = compute_difficulty(&matrix(vec![
            vec![1.0, 0.0, 0.9],
            vec![1.0, 0.0, 0.5],
            vec![1.0, 0.0, 0.1],
            vec![1.0, 0.0, 0.5],
        ]));
        assert_eq!(d.scores()[0], 0.0);
        assert_eq!(d.scores()[1], 1.0);
        assert_eq!(d.scores()[2], 1.0 - 2.0 / 4.0);
        assert_eq!(d.n_models(), &[4, 4, 4]);
    }

    #[test]
    fn masked_entries_are_skipped() {
        let conf = ConfidenceMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![0.2, 0.0],
            Some(vec![true, false]),
        )
        .unwrap();
        let d = compute_difficulty(&conf);
        assert_eq!(d.scores(), &[0.8]);
        assert_eq!(d.n_models(), &[1]);
    }

    #[test]
    fn histogram_cases() {
        let d = DifficultyVector::new(vec!["a".into(), "b".into()], vec![0.0, 1.0], vec![1, 1]).unwrap();
        assert_eq!(difficulty_histogram(&d, 2).unwrap(), vec![1, 1]);

        let d = DifficultyVector::new((0..7).map(|i| format!("{i}")).collect(), vec![0.5; 7], vec![1; 7]).unwrap();
        let h = difficulty_histogram(&d, 10).unwrap();
        assert_eq!(h[5], 7);
        assert_eq!(h.iter().sum::<usize>(), 7);

        assert!(difficulty_histogram(&d, 0).is_err());
    }
}
