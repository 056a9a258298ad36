//! Stage-II classification: stacked phase+intensity features, a multiclass
//! SVM, and clip-grouped stratified cross-validation.

pub mod augment;
pub mod svm;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{param, Error, Result};
use crate::features::{Domain, FeatureVector};
use crate::label::ClassLabel;
use crate::rng;
use crate::sensing::Modality;

pub use augment::{apply_augmentation, augment, draw_augmentations, Augmentation};
pub use svm::{KernelKind, SvmModel, SvmParams};

pub const DEFAULT_FOLDS: usize = 5;

/// Normalized phase block followed by the normalized intensity block.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedFeature {
    pub values: Vec<f64>,
    pub label: ClassLabel,
    pub domain: Domain,
    /// Clip the sample came from; cross-validation keeps a source in one fold.
    pub source_id: String,
    pub augmented: bool,
}

impl StackedFeature {
    pub fn with_source(mut self, source_id: impl Into<String>, augmented: bool) -> Self {
        self.source_id = source_id.into();
        self.augmented = augmented;
        self
    }

    /// Copy keeping only the phase block.
    pub fn phase_only(&self) -> StackedFeature {
        StackedFeature {
            values: self.values[..self.values.len() / 2].to_vec(),
            ..self.clone()
        }
    }
}

fn max_normalize(block: &[f64]) -> Vec<f64> {
    let peak = block.iter().fold(0.0f64, |m, v| m.max(*v));
    if peak > 0.0 {
        block.iter().map(|v| v / peak).collect()
    } else {
        vec![0.0; block.len()]
    }
}

/// Scale each block to peak 1 and concatenate them.
pub fn normalize_concat(
    phase: &FeatureVector,
    intensity: &FeatureVector,
    label: ClassLabel,
) -> Result<StackedFeature> {
    if phase.modality != Modality::Phase || intensity.modality != Modality::Intensity {
        return param("normalize_concat expects a phase and an intensity vector");
    }
    if phase.len() != intensity.len() || phase.is_empty() {
        return param(format!(
            "phase has {} bands and intensity {}",
            phase.len(),
            intensity.len()
        ));
    }
    if (phase.channel, phase.window_index, phase.domain) != (intensity.channel, intensity.window_index, intensity.domain) {
        return param("phase and intensity vectors come from different windows or domains");
    }
    let mut values = max_normalize(&phase.band_energies);
    values.extend(max_normalize(&intensity.band_energies));
    Ok(StackedFeature {
        values,
        label,
        domain: phase.domain,
        source_id: String::new(),
        augmented: false,
    })
}

pub fn train_svm(data: &[StackedFeature], params: &SvmParams) -> Result<SvmModel> {
    let rows: Vec<&[f64]> = data.iter().map(|s| s.values.as_slice()).collect();
    let labels: Vec<ClassLabel> = data.iter().map(|s| s.label).collect();
    SvmModel::fit(&rows, &labels, params)
}

/// Rows are truth, columns are predictions, both in `ClassLabel::ALL` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 5]; 5],
}

fn index(label: ClassLabel) -> usize {
    ClassLabel::ALL.iter().position(|c| *c == label).expect("label in ALL")
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix { counts: [[0; 5]; 5] }
    }

    pub fn from_counts(counts: [[u64; 5]; 5]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn class_order(&self) -> &'static [ClassLabel] {
        &ClassLabel::ALL
    }

    pub fn add(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[index(truth)][index(predicted)] += 1;
    }

    pub fn get(&self, truth: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[index(truth)][index(predicted)]
    }

    pub fn counts(&self) -> &[[u64; 5]; 5] {
        &self.counts
    }

    pub fn row_sum(&self, truth: ClassLabel) -> u64 {
        self.counts[index(truth)].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..5).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in ClassLabel::ALL {
            out.push(',');
            out.push_str(c.code());
        }
        out.push('\n');
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            out.push_str(c.code());
            for v in self.counts[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy over the four event rows. EN predictions on those rows count as
/// errors; the EN row is ignored.
pub fn four_class_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total: u64 = ClassLabel::EVENTS.iter().map(|c| cm.row_sum(*c)).sum();
    if total == 0 {
        return Err(Error::Degenerate("confusion matrix has no event rows".into()));
    }
    let correct: u64 = ClassLabel::EVENTS.iter().map(|c| cm.get(*c, *c)).sum();
    Ok(correct as f64 / total as f64)
}

/// Fold of every source clip.
pub type FoldAssignment = BTreeMap<String, usize>;

/// Stratified fold assignment of source clips. A clip's stratum is the label
/// of its first original sample.
pub fn assign_folds(dataset: &[StackedFeature], folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds < 2 {
        return param(format!("need at least 2 folds, got {folds}"));
    }
    let mut per_class = [0usize; 5];
    let mut strata: BTreeMap<ClassLabel, Vec<&str>> = BTreeMap::new();
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    for s in dataset.iter().filter(|s| !s.augmented) {
        per_class[index(s.label)] += 1;
        if seen.insert(&s.source_id, ()).is_none() {
            strata.entry(s.label).or_default().push(&s.source_id);
        }
    }
    for (i, n) in per_class.iter().enumerate() {
        if *n > 0 && *n < folds {
            return param(format!(
                "class {} has {n} samples, fewer than {folds} folds",
                ClassLabel::ALL[i]
            ));
        }
    }
    let mut r = rng::stream(seed, 0);
    let mut out = FoldAssignment::new();
    let mut offset = 0;
    for (_, mut groups) in strata {
        groups.sort_unstable();
        groups.shuffle(&mut r);
        for (i, g) in groups.iter().enumerate() {
            out.insert(g.to_string(), (offset + i) % folds);
        }
        offset += groups.len();
    }
    Ok(out)
}

/// Training and test indices of one fold. Training takes every sample,
/// original or augmented, whose source is in another fold; testing takes the
/// originals of this fold.
pub fn fold_split(
    dataset: &[StackedFeature],
    assignment: &FoldAssignment,
    fold: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.iter().enumerate() {
        let Some(&f) = assignment.get(&s.source_id) else {
            return param(format!("sample source {:?} has no original in the dataset", s.source_id));
        };
        if f != fold {
            train.push(i);
        } else if !s.augmented {
            test.push(i);
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub folds: usize,
    pub assignment: FoldAssignment,
    /// False when any fold's model hit the iteration cap.
    pub converged: bool,
}

pub fn cross_validate(
    dataset: &[StackedFeature],
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<CvReport> {
    let assignment = assign_folds(dataset, folds, seed)?;
    let mut confusion = ConfusionMatrix::new();
    let mut converged = true;
    for fold in 0..folds {
        let (train, test) = fold_split(dataset, &assignment, fold)?;
        if test.is_empty() {
            continue;
        }
        let rows: Vec<&[f64]> = train.iter().map(|&i| dataset[i].values.as_slice()).collect();
        let labels: Vec<ClassLabel> = train.iter().map(|&i| dataset[i].label).collect();
        let model = SvmModel::fit(&rows, &labels, params)?;
        converged &= model.converged();
        for &i in &test {
            confusion.add(dataset[i].label, model.predict(&dataset[i].values)?);
        }
    }
    Ok(CvReport {
        accuracy: confusion.accuracy(),
        confusion,
        folds,
        assignment,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use ClassLabel::*;

    fn fv(e: Vec<f64>, modality: Modality) -> FeatureVector {
        FeatureVector {
            band_energies: e,
            modality,
            domain: Domain::Nyquist,
            channel: 1,
            window_index: 2,
        }
    }

    #[test]
    fn blocks_peak_at_one() {
        let p = fv((1..=50).map(|i| 2.0 * i as f64).collect(), Modality::Phase);
        let z = fv(vec![0.0; 50], Modality::Intensity);
        let s = normalize_concat(&p, &z, TH).unwrap();
        assert_eq!(s.values.len(), 100);
        assert_eq!(s.values[49], 1.0);
        assert_eq!(s.values[0], 2.0 / 100.0);
        assert!(s.values[50..].iter().all(|v| *v == 0.0));
        assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s.phase_only().values, s.values[..50].to_vec());
    }

    #[test]
    fn concat_rejects_mismatch() {
        let p = fv(vec![1.0; 50], Modality::Phase);
        assert!(normalize_concat(&p, &fv(vec![1.0; 49], Modality::Intensity), TH).is_err());
        assert!(normalize_concat(&p, &fv(vec![1.0; 50], Modality::Phase), TH).is_err());
        let mut other = fv(vec![1.0; 50], Modality::Intensity);
        other.window_index = 3;
        assert!(normalize_concat(&p, &other, TH).is_err());
    }

    #[test]
    fn four_class_accuracy_by_hand() {
        let cm = ConfusionMatrix::from_counts([
            [8, 0, 0, 0, 2],
            [0, 10, 0, 0, 0],
            [0, 0, 10, 0, 0],
            [0, 0, 0, 10, 0],
            [5, 0, 0, 0, 5],
        ]);
        assert_eq!(four_class_accuracy(&cm).unwrap(), 0.95);
        let mut diag = ConfusionMatrix::new();
        let mut th_lost = ConfusionMatrix::new();
        for c in ClassLabel::ALL {
            diag.add(c, c);
            th_lost.add(c, if c == TH { EN } else { c });
        }
        assert_eq!(four_class_accuracy(&diag).unwrap(), 1.0);
        assert_eq!(four_class_accuracy(&th_lost).unwrap(), 0.75);
        assert_eq!(th_lost.get(TH, TH), 0);
    }

    #[test]
    fn confusion_csv_has_class_headers() {
        let mut cm = ConfusionMatrix::new();
        cm.add(WD, SH);
        let csv = cm.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "truth,TH,WD,JH,SH,EN");
        assert_eq!(lines[2], "WD,0,0,0,1,0");
        assert_eq!(lines.len(), 6);
    }

    /// 5 classes, `clips` clips each with `per_clip` windows and one augmented copy per window.
    fn synthetic(clips: usize, per_clip: usize, spread: f64, seed: u64) -> Vec<StackedFeature> {
        let mut r = rng::stream(seed, 0);
        let mut out = Vec::new();
        for (ci, c) in ClassLabel::ALL.iter().enumerate() {
            for k in 0..clips {
                let id = format!("{}-{k}", c.code());
                for _ in 0..per_clip {
                    let values: Vec<f64> = (0..10)
                        .map(|d| if d == 2 * ci { 1.0 } else { 0.2 } + r.random_range(-spread..spread))
                        .collect();
                    let s = StackedFeature {
                        values,
                        label: *c,
                        domain: Domain::Nyquist,
                        source_id: id.clone(),
                        augmented: false,
                    };
                    let mut aug = s.clone();
                    aug.values.iter_mut().for_each(|v| *v *= 1.01);
                    aug.augmented = true;
                    out.push(s);
                    out.push(aug);
                }
            }
        }
        out
    }

    #[test]
    fn separable_data_is_perfect() {
        let data = synthetic(8, 5, 0.05, 1);
        let cv = cross_validate(&data, 5, 7, &SvmParams::default()).unwrap();
        assert_eq!(cv.accuracy, 1.0);
        assert!(cv.converged);
    }

    #[test]
    fn every_original_tested_once() {
        let data = synthetic(8, 5, 0.6, 2);
        let originals = data.iter().filter(|s| !s.augmented).count();
        assert_eq!(originals, 200);
        let cv = cross_validate(&data, 5, 3, &SvmParams::default()).unwrap();
        assert_eq!(cv.confusion.total(), 200);
        for c in ClassLabel::ALL {
            assert_eq!(cv.confusion.row_sum(c), 40);
        }
        let mut tested = vec![0; data.len()];
        for f in 0..5 {
            for i in fold_split(&data, &cv.assignment, f).unwrap().1 {
                tested[i] += 1;
            }
        }
        for (s, t) in data.iter().zip(&tested) {
            assert_eq!(*t, usize::from(!s.augmented));
        }
    }

    #[test]
    fn augmented_copies_never_leak() {
        let data = synthetic(6, 3, 0.3, 4);
        let a = assign_folds(&data, 5, 9).unwrap();
        for f in 0..5 {
            let (train, test) = fold_split(&data, &a, f).unwrap();
            let test_sources: std::collections::BTreeSet<&str> =
                test.iter().map(|&i| data[i].source_id.as_str()).collect();
            assert!(train.iter().all(|&i| !test_sources.contains(data[i].source_id.as_str())));
            assert!(test.iter().all(|&i| !data[i].augmented));
        }
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let data = synthetic(10, 1, 0.3, 5);
        let a = assign_folds(&data, 5, 1).unwrap();
        assert_eq!(a, assign_folds(&data, 5, 1).unwrap());
        assert_ne!(a, assign_folds(&data, 5, 2).unwrap());
        for c in ClassLabel::ALL {
            let mut per_fold = [0; 5];
            for (id, f) in &a {
                if id.starts_with(c.code()) {
                    per_fold[*f] += 1;
                }
            }
            assert_eq!(per_fold, [2; 5]);
        }
    }

    #[test]
    fn too_few_samples_per_class() {
        let data = synthetic(1, 3, 0.1, 6);
        assert!(matches!(cross_validate(&data, 5, 0, &SvmParams::default()), Err(Error::Parameter(_))));
        assert!(assign_folds(&data, 1, 0).is_err());
    }
}
