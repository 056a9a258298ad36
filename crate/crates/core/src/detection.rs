//! Stage-I detection: compare a window's band energies against multiples of
//! the quiet-channel baseline, then sweep the multiplier for ROC analysis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::features::{Domain, FeatureVector};
use crate::sensing::Modality;

pub const DEFAULT_FRACTION: f64 = 0.8;

/// How a multiplier turns the baseline into per-band thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Each band against its own quiet mean.
    #[default]
    PerBand,
    /// Every band against the mean of all band means.
    GrandMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStats {
    per_band_mean: Vec<f64>,
    domain: Domain,
    n_windows: usize,
}

impl BaselineStats {
    pub fn per_band_mean(&self) -> &[f64] {
        &self.per_band_mean
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn grand_mean(&self) -> f64 {
        self.per_band_mean.iter().sum::<f64>() / self.per_band_mean.len() as f64
    }

    /// Reference level of each band before the multiplier is applied.
    pub fn references(&self, mode: ThresholdMode) -> Vec<f64> {
        match mode {
            ThresholdMode::PerBand => self.per_band_mean.clone(),
            ThresholdMode::GrandMean => vec![self.grand_mean(); self.per_band_mean.len()],
        }
    }

    /// Copy with every mean multiplied by `c`.
    pub fn scaled(&self, c: f64) -> BaselineStats {
        BaselineStats {
            per_band_mean: self.per_band_mean.iter().map(|m| m * c).collect(),
            ..self.clone()
        }
    }
}

/// Per-band mean of quiet phase windows.
pub fn baseline_stats(quiet_features: &[FeatureVector]) -> Result<BaselineStats> {
    let Some(first) = quiet_features.first() else {
        return param("baseline needs at least one quiet window");
    };
    let bands = first.len();
    if bands == 0 {
        return param("baseline feature vectors are empty");
    }
    let mut sums = vec![0.0; bands];
    for fv in quiet_features {
        if fv.domain != first.domain {
            return param("baseline windows mix nyquist and compressed features");
        }
        if fv.modality != Modality::Phase {
            return param("baseline windows must be phase features");
        }
        if fv.len() != bands {
            return param(format!("baseline windows have {} and {} bands", bands, fv.len()));
        }
        for (s, e) in sums.iter_mut().zip(&fv.band_energies) {
            *s += e;
        }
    }
    let n = quiet_features.len() as f64;
    let per_band_mean: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    if let Some(i) = per_band_mean.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::Degenerate(format!(
            "quiet baseline for band {i} is {}, expected a positive noise floor",
            per_band_mean[i]
        )));
    }
    Ok(BaselineStats {
        per_band_mean,
        domain: first.domain,
        n_windows: quiet_features.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionDecision {
    pub channel: usize,
    pub window_index: usize,
    pub is_vibration: bool,
    pub fraction_above: f64,
}

fn check_rule(features: &FeatureVector, baseline: &BaselineStats, multiplier: f64, fraction: f64) -> Result<()> {
    if features.domain != baseline.domain {
        return param(format!(
            "{} features against a {} baseline",
            features.domain.as_str(),
            baseline.domain.as_str()
        ));
    }
    if features.len() != baseline.per_band_mean.len() {
        return param(format!(
            "{} band energies against a {}-band baseline",
            features.len(),
            baseline.per_band_mean.len()
        ));
    }
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return param(format!("multiplier must be positive, got {multiplier}"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return param(format!("fraction must lie in (0, 1], got {fraction}"));
    }
    Ok(())
}

fn decide(energies: &[f64], references: &[f64], multiplier: f64, fraction: f64) -> (bool, f64) {
    let above = energies
        .iter()
        .zip(references)
        .filter(|(e, r)| **e > multiplier * **r)
        .count();
    let fraction_above = above as f64 / energies.len() as f64;
    (fraction_above >= fraction, fraction_above)
}

/// Per-band rule: a window is vibration when at least `fraction` of its
/// bands exceed `multiplier` times the quiet mean.
pub fn detect(
    features: &FeatureVector,
    baseline: &BaselineStats,
    multiplier: f64,
    fraction: f64,
) -> Result<DetectionDecision> {
    detect_with(features, baseline, multiplier, fraction, ThresholdMode::PerBand)
}

pub fn detect_with(
    features: &FeatureVector,
    baseline: &BaselineStats,
    multiplier: f64,
    fraction: f64,
    mode: ThresholdMode,
) -> Result<DetectionDecision> {
    check_rule(features, baseline, multiplier, fraction)?;
    let refs = baseline.references(mode);
    let (is_vibration, fraction_above) = decide(&features.band_energies, &refs, multiplier, fraction);
    Ok(DetectionDecision {
        channel: features.channel,
        window_index: features.window_index,
        is_vibration,
        fraction_above,
    })
}

/// Channels with at least one vibration window.
pub fn channel_alarms(decisions: &[DetectionDecision]) -> BTreeSet<usize> {
    decisions.iter().filter(|d| d.is_vibration).map(|d| d.channel).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub multiplier: f64,
    pub tpr: f64,
    pub fpr: f64,
}

impl RocPoint {
    /// Distance to the ideal corner (fpr 0, tpr 1).
    pub fn corner_distance(&self) -> f64 {
        self.fpr.hypot(1.0 - self.tpr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("multiplier,tpr,fpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.multiplier, p.tpr, p.fpr));
        }
        out
    }
}

/// Multipliers 0.5, 0.55, ..., 10.0.
pub fn default_multiplier_grid() -> Vec<f64> {
    (0..=190).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Trapezoidal area under (fpr, tpr) points, closing the curve at (0,0) and (1,1).
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    if !pts.contains(&(0.0, 0.0)) {
        pts.push((0.0, 0.0));
    }
    if !pts.contains(&(1.0, 1.0)) {
        pts.push((1.0, 1.0));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// ROC over a multiplier grid using the default per-band rule.
pub fn roc_sweep(
    labeled: &[(FeatureVector, bool)],
    baseline: &BaselineStats,
    multipliers: &[f64],
) -> Result<RocCurve> {
    roc_sweep_with(labeled, baseline, multipliers, DEFAULT_FRACTION, ThresholdMode::PerBand)
}

pub fn roc_sweep_with(
    labeled: &[(FeatureVector, bool)],
    baseline: &BaselineStats,
    multipliers: &[f64],
    fraction: f64,
    mode: ThresholdMode,
) -> Result<RocCurve> {
    let positives = labeled.iter().filter(|(_, t)| *t).count();
    let negatives = labeled.len() - positives;
    if positives == 0 || negatives == 0 {
        return param(format!(
            "ROC needs both classes, got {positives} positives and {negatives} negatives"
        ));
    }
    if multipliers.is_empty() {
        return param("empty multiplier grid");
    }
    if multipliers.windows(2).any(|w| w[1] < w[0]) {
        return param("multiplier grid must be sorted ascending");
    }
    let refs = baseline.references(mode);
    for (fv, _) in labeled {
        check_rule(fv, baseline, multipliers[0], fraction)?;
    }
    let mut points = Vec::with_capacity(multipliers.len());
    for &m in multipliers {
        if !(m > 0.0 && m.is_finite()) {
            return param(format!("multiplier must be positive, got {m}"));
        }
        let (mut tp, mut fp) = (0usize, 0usize);
        for (fv, truth) in labeled {
            if decide(&fv.band_energies, &refs, m, fraction).0 {
                if *truth {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push(RocPoint {
            multiplier: m,
            tpr: tp as f64 / positives as f64,
            fpr: fp as f64 / negatives as f64,
        });
    }
    let auc = trapezoid_auc(&points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>());
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub multiplier: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub distance: f64,
}

/// Point nearest the top-left corner; ties go to the smaller multiplier.
pub fn pick_operating_point(curve: &RocCurve) -> Result<OperatingPoint> {
    let mut best: Option<OperatingPoint> = None;
    for p in &curve.points {
        let d = p.corner_distance();
        let better = match best {
            None => true,
            Some(b) => d < b.distance || (d == b.distance && p.multiplier < b.multiplier),
        };
        if better {
            best = Some(OperatingPoint {
                multiplier: p.multiplier,
                tpr: p.tpr,
                fpr: p.fpr,
                distance: d,
            });
        }
    }
    best.ok_or_else(|| Error::Parameter("empty ROC curve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn fv(energies: Vec<f64>) -> FeatureVector {
        FeatureVector {
            band_energies: energies,
            modality: Modality::Phase,
            domain: Domain::Nyquist,
            channel: 0,
            window_index: 0,
        }
    }

    fn ramp_baseline() -> BaselineStats {
        baseline_stats(&[fv((1..=50).map(|i| i as f64).collect())]).unwrap()
    }

    #[test]
    fn baseline_is_arithmetic_mean() {
        let single = fv((1..=50).map(|i| i as f64 * 0.5).collect());
        assert_eq!(baseline_stats(std::slice::from_ref(&single)).unwrap().per_band_mean(), &single.band_energies[..]);
        let b = baseline_stats(&[fv(vec![2.0; 50]), fv(vec![4.0; 50])]).unwrap();
        assert_eq!(b.per_band_mean(), &[3.0; 50][..]);
        assert_eq!(b.n_windows(), 2);
    }

    #[test]
    fn baseline_rejects_bad_input() {
        assert!(matches!(baseline_stats(&[]), Err(Error::Parameter(_))));
        let mut c = fv(vec![1.0; 50]);
        c.domain = Domain::Compressed;
        assert!(baseline_stats(&[fv(vec![1.0; 50]), c]).is_err());
        let mut i = fv(vec![1.0; 50]);
        i.modality = Modality::Intensity;
        assert!(baseline_stats(&[i]).is_err());
        assert!(matches!(baseline_stats(&[fv(vec![0.0; 50])]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_energy_is_quiet() {
        let d = detect(&fv(vec![0.0; 50]), &ramp_baseline(), 1.0, 0.8).unwrap();
        assert_eq!(d.fraction_above, 0.0);
        assert!(!d.is_vibration);
    }

    #[test]
    fn ten_times_baseline_fires() {
        let b = ramp_baseline();
        let e = b.per_band_mean().iter().map(|m| 10.0 * m).collect();
        let d = detect(&fv(e), &b, 2.26, 0.8).unwrap();
        assert_eq!(d.fraction_above, 1.0);
        assert!(d.is_vibration);
    }

    #[test]
    fn eighty_percent_boundary_is_inclusive() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let mut e = vec![0.5; 50];
        e[..40].fill(5.0);
        let d = detect(&fv(e.clone()), &b, 2.0, 0.8).unwrap();
        assert_eq!(d.fraction_above, 0.8);
        assert!(d.is_vibration);
        e[39] = 0.5;
        assert!(!detect(&fv(e), &b, 2.0, 0.8).unwrap().is_vibration);
    }

    #[test]
    fn detect_validates_arguments() {
        let b = ramp_baseline();
        let mut c = fv(vec![1.0; 50]);
        c.domain = Domain::Compressed;
        assert!(detect(&c, &b, 2.0, 0.8).is_err());
        assert!(detect(&fv(vec![1.0; 50]), &b, 0.0, 0.8).is_err());
        assert!(detect(&fv(vec![1.0; 50]), &b, 1.0, 0.0).is_err());
        assert!(detect(&fv(vec![1.0; 50]), &b, 1.0, 1.1).is_err());
        assert!(detect(&fv(vec![1.0; 49]), &b, 1.0, 0.8).is_err());
    }

    #[test]
    fn grand_mean_mode_uses_one_threshold() {
        let b = ramp_baseline();
        // grand mean of 1..=50 is 25.5
        let e: Vec<f64> = (0..50).map(|i| if i < 40 { 26.0 } else { 0.0 }).collect();
        let d = detect_with(&fv(e.clone()), &b, 1.0, 0.8, ThresholdMode::GrandMean).unwrap();
        assert!(d.is_vibration);
        assert!(!detect(&fv(e), &b, 1.0, 0.8).unwrap().is_vibration);
    }

    #[test]
    fn channel_alarm_from_any_window() {
        let mk = |channel, window_index, v| DetectionDecision {
            channel,
            window_index,
            is_vibration: v,
            fraction_above: 0.0,
        };
        let alarms = channel_alarms(&[mk(0, 0, false), mk(0, 1, true), mk(1, 0, false), mk(2, 2, true)]);
        assert_eq!(alarms.into_iter().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn separated_classes_give_unit_auc() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let mut labeled = Vec::new();
        for i in 0..20 {
            labeled.push((fv(vec![50.0 + i as f64; 50]), true));
            labeled.push((fv(vec![i as f64 / 10.0; 50]), false));
        }
        let roc = roc_sweep(&labeled, &b, &default_multiplier_grid()).unwrap();
        assert_eq!(roc.auc, 1.0);
        let op = pick_operating_point(&roc).unwrap();
        assert_eq!((op.tpr, op.fpr, op.distance), (1.0, 0.0, 0.0));
        // largest negative energy is 1.9, and the comparison is strict
        assert_eq!(op.multiplier, 1.9);
    }

    fn random_labels(seed: u64) -> Vec<(FeatureVector, bool)> {
        let mut r = rng::stream(seed, 0);
        (0..200)
            .map(|i| {
                let level = 0.5 + 3.0 * (i % 20) as f64 / 20.0;
                (fv(vec![level; 50]), r.random_bool(0.5))
            })
            .collect()
    }

    #[test]
    fn random_labels_give_chance_auc() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let grid = default_multiplier_grid();
        let aucs: Vec<f64> = (0..20).map(|s| roc_sweep(&random_labels(s), &b, &grid).unwrap().auc).collect();
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.1, "mean AUC {mean}");
    }

    #[test]
    fn inverted_labels_complement_auc() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let grid = default_multiplier_grid();
        for s in 0..5 {
            let data = random_labels(s);
            let inv: Vec<_> = data.iter().map(|(f, t)| (f.clone(), !t)).collect();
            let a = roc_sweep(&data, &b, &grid).unwrap().auc;
            let ai = roc_sweep(&inv, &b, &grid).unwrap().auc;
            assert!((a + ai - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_is_monotone_in_multiplier() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let roc = roc_sweep(&random_labels(9), &b, &default_multiplier_grid()).unwrap();
        for w in roc.points.windows(2) {
            assert!(w[0].multiplier < w[1].multiplier);
            assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
    }

    #[test]
    fn roc_needs_both_classes() {
        let b = baseline_stats(&[fv(vec![1.0; 50])]).unwrap();
        let only_pos = vec![(fv(vec![3.0; 50]), true)];
        assert!(roc_sweep(&only_pos, &b, &[1.0]).is_err());
        let both = vec![(fv(vec![3.0; 50]), true), (fv(vec![0.0; 50]), false)];
        assert!(roc_sweep(&both, &b, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn operating_point_prefers_nearest_corner() {
        let curve = RocCurve {
            points: vec![
                RocPoint { multiplier: 1.0, tpr: 0.9, fpr: 0.1 },
                RocPoint { multiplier: 2.0, tpr: 0.8, fpr: 0.05 },
            ],
            auc: 0.0,
        };
        let op = pick_operating_point(&curve).unwrap();
        assert_eq!((op.tpr, op.fpr), (0.9, 0.1));
        assert!((op.distance - 0.141).abs() < 1e-3);
        assert!((curve.points[1].corner_distance() - 0.206).abs() < 1e-3);
    }

    #[test]
    fn operating_point_ties_take_smaller_multiplier() {
        let p = |multiplier| RocPoint { multiplier, tpr: 0.9, fpr: 0.1 };
        let curve = RocCurve { points: vec![p(1.5), p(1.0), p(2.0)], auc: 0.0 };
        assert_eq!(pick_operating_point(&curve).unwrap().multiplier, 1.0);
        assert!(pick_operating_point(&RocCurve { points: vec![], auc: 0.0 }).is_err());
    }

    #[test]
    fn default_grid_brackets_paper_points() {
        let g = default_multiplier_grid();
        assert_eq!(g.len(), 191);
        assert_eq!((g[0], g[190]), (0.5, 10.0));
        assert!(g.contains(&3.3) && g.contains(&2.25));
    }

    #[test]
    fn roc_csv_header() {
        let curve = RocCurve { points: vec![RocPoint { multiplier: 1.0, tpr: 0.5, fpr: 0.25 }], auc: 0.5 };
        assert_eq!(curve.to_csv(), "multiplier,tpr,fpr\n1,0.5,0.25\n");
    }
}
