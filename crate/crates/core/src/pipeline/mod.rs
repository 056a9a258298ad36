//! End-to-end runs: Stage-I detection and Stage-II classification in the
//! Nyquist and compressed domains, sharing one dataset, one filter bank and
//! one observation matrix.

pub mod bench;
pub mod config;
pub mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classification::{
    augment, cross_validate, four_class_accuracy, normalize_concat, CvReport, StackedFeature,
};
use crate::datagen::{ClipSource, DiskDataset, SyntheticSource};
use crate::detection::{
    baseline_stats, detect_with, pick_operating_point, roc_sweep_with, BaselineStats, DetectionDecision,
    OperatingPoint, RocCurve,
};
use crate::error::{param, Result, ResultExt};
use crate::features::{all_windows, extract_windows, window_count, window_len, Domain, FeatureSpace, WindowRef};
use crate::filterbank::{build_filter_bank, project_filter_bank, BankParams, CompressedFilterBank, FilterBank};
use crate::label::ClassLabel;
use crate::rng::{self, derive_seed};
use crate::sensing::{make_observation_matrix, Modality, ObservationMatrix, Trace};

pub use config::RunConfig;

/// Dataset, filter banks and observation matrix for one run.
pub struct Context {
    pub config: RunConfig,
    pub source: Box<dyn ClipSource>,
    pub window_len: usize,
    pub n_windows: usize,
    pub bank: FilterBank,
    pub matrix: ObservationMatrix,
    pub cbank: CompressedFilterBank,
}

pub fn open_source(config: &RunConfig) -> Result<Box<dyn ClipSource>> {
    match &config.dataset.path {
        Some(p) => Ok(Box::new(DiskDataset::open(p)?)),
        None => Ok(Box::new(SyntheticSource::new(config.dataset.spec.clone())?)),
    }
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self> {
        let source = open_source(&config).stage("dataset")?;
        Self::with_source(config, source)
    }

    pub fn with_source(config: RunConfig, source: Box<dyn ClipSource>) -> Result<Self> {
        config.validate()?;
        let spec = source.spec();
        let len = window_len(config.bank.window_s, spec.sample_rate_hz);
        let n_windows = window_count(spec.n_samples(), len);
        if len == 0 || n_windows == 0 {
            return param(format!(
                "window of {} s does not fit a {} s clip",
                config.bank.window_s, spec.duration_s
            ));
        }
        let bank = build_filter_bank(BankParams {
            sample_rate_hz: spec.sample_rate_hz,
            n: len,
            n_bands: config.bank.n_bands,
            band_width_hz: config.bank.band_width_hz,
            taps: config.bank.taps,
        })
        .stage("filter bank")?;
        let matrix = make_observation_matrix(len, config.matrix.mr, config.matrix.seed, config.matrix.kind)
            .stage("observation matrix")?;
        let cbank = project_filter_bank(&bank, &matrix).stage("filter projection")?;
        Ok(Context {
            config,
            source,
            window_len: len,
            n_windows,
            bank,
            matrix,
            cbank,
        })
    }

    pub fn space(&self, domain: Domain) -> FeatureSpace<'_> {
        match domain {
            Domain::Nyquist => FeatureSpace::Nyquist(&self.bank),
            Domain::Compressed => FeatureSpace::Compressed {
                bank: &self.cbank,
                matrix: &self.matrix,
            },
        }
    }
}

/// Stage-I verdict on one phase window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOutcome {
    pub clip_index: usize,
    pub channel: usize,
    pub window: usize,
    /// Window lies on the vibrating channel of an event clip.
    pub truth: bool,
    pub is_vibration: bool,
    pub fraction_above: f64,
}

#[derive(Debug, Clone)]
pub struct DomainDetection {
    pub domain: Domain,
    pub baseline: BaselineStats,
    pub roc: RocCurve,
    pub operating_point: OperatingPoint,
    pub windows: Vec<WindowOutcome>,
}

/// Stage-I in both domains. The baseline is the per-band mean over every
/// window of the quiet clips.
pub fn stage_one(ctx: &Context) -> Result<Vec<DomainDetection>> {
    let cfg = &ctx.config;
    let entries = ctx.source.entries();
    let mut feats: BTreeMap<Domain, Vec<(WindowRef, usize, bool, crate::features::FeatureVector)>> = BTreeMap::new();
    for (i, entry) in entries.iter().enumerate() {
        let clip = ctx.source.clip(i).stage(&format!("stage-I clip {}", entry.clip_id))?;
        let picks = all_windows(&clip, ctx.window_len);
        for domain in Domain::BOTH {
            let fv = extract_windows(&clip, &ctx.space(domain), ctx.window_len, &picks, &[Modality::Phase])
                .stage(&format!("stage-I features for clip {}", entry.clip_id))?;
            let out = feats.entry(domain).or_default();
            for (p, f) in picks.iter().zip(fv) {
                out.push((*p, i, clip.vibration_channel == Some(p.channel), f));
            }
        }
    }
    let grid = cfg.multipliers();
    let mut result = Vec::new();
    for domain in Domain::BOTH {
        let rows = feats.remove(&domain).unwrap_or_default();
        let quiet: Vec<_> = rows
            .iter()
            .filter(|r| !entries[r.1].label.is_event())
            .map(|r| r.3.clone())
            .collect();
        if quiet.is_empty() {
            return param("stage-I baseline: dataset has no quiet clips");
        }
        let ctx_name = format!("stage-I {}", domain.as_str());
        let baseline = baseline_stats(&quiet).stage(&ctx_name)?;
        let labeled: Vec<_> = rows.iter().map(|r| (r.3.clone(), r.2)).collect();
        let roc = roc_sweep_with(&labeled, &baseline, &grid, cfg.detection.fraction, cfg.detection.mode)
            .stage(&ctx_name)?;
        let op = pick_operating_point(&roc).stage(&ctx_name)?;
        let windows = rows
            .iter()
            .map(|(p, clip_index, truth, fv)| {
                let d: DetectionDecision =
                    detect_with(fv, &baseline, op.multiplier, cfg.detection.fraction, cfg.detection.mode)?;
                Ok(WindowOutcome {
                    clip_index: *clip_index,
                    channel: p.channel,
                    window: p.window,
                    truth: *truth,
                    is_vibration: d.is_vibration,
                    fraction_above: d.fraction_above,
                })
            })
            .collect::<Result<Vec<_>>>()
            .stage(&ctx_name)?;
        result.push(DomainDetection {
            domain,
            baseline,
            roc,
            operating_point: op,
            windows,
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitKey {
    pub clip_index: usize,
    pub channel: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitOrigin {
    TruePositive,
    FalseAlarm,
    QuietFill,
}

/// A window passed to Stage-II.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    pub key: UnitKey,
    pub label: ClassLabel,
    pub origin: UnitOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitSelection {
    pub domain: Domain,
    pub units: Vec<Unit>,
    pub false_alarms: usize,
    pub quiet_fill: usize,
}

/// Stage-II units from Stage-I alarms: hits on the vibrating channel keep the
/// clip's label and every other alarm becomes EN. When false alarms number
/// fewer than `min_en`, one random window from each of up to
/// `min_en - false_alarms` quiet clips is added as EN.
pub fn select_units(
    source: &dyn ClipSource,
    domain: Domain,
    windows: &[WindowOutcome],
    min_en: usize,
    n_windows: usize,
    seed: u64,
) -> UnitSelection {
    let entries = source.entries();
    let mut units = Vec::new();
    for w in windows.iter().filter(|w| w.is_vibration) {
        let key = UnitKey {
            clip_index: w.clip_index,
            channel: w.channel,
            window: w.window,
        };
        units.push(if w.truth {
            Unit { key, label: entries[w.clip_index].label, origin: UnitOrigin::TruePositive }
        } else {
            Unit { key, label: ClassLabel::EN, origin: UnitOrigin::FalseAlarm }
        });
    }
    let false_alarms = units.iter().filter(|u| u.origin == UnitOrigin::FalseAlarm).count();
    let mut quiet_fill = 0;
    if false_alarms < min_en {
        let taken: BTreeSet<UnitKey> = units.iter().map(|u| u.key).collect();
        let mut quiet: Vec<usize> = (0..entries.len()).filter(|&i| !entries[i].label.is_event()).collect();
        let mut r = rng::stream(seed, 0);
        quiet.shuffle(&mut r);
        for i in quiet.into_iter().take(min_en - false_alarms) {
            let key = UnitKey {
                clip_index: i,
                channel: r.random_range(0..entries[i].n_channels),
                window: r.random_range(0..n_windows),
            };
            if !taken.contains(&key) {
                units.push(Unit { key, label: ClassLabel::EN, origin: UnitOrigin::QuietFill });
                quiet_fill += 1;
            }
        }
    }
    units.sort_by_key(|u| u.key);
    UnitSelection {
        domain,
        units,
        false_alarms,
        quiet_fill,
    }
}

/// One Stage-II sample with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub key: UnitKey,
    pub clip_id: String,
    pub feature: StackedFeature,
}

#[derive(Debug, Clone)]
pub struct DomainClassification {
    pub domain: Domain,
    pub selection: UnitSelection,
    /// Originals and augmented copies, unit by unit.
    pub samples: Vec<SampleRecord>,
    pub stacked: CvReport,
    pub phase_only: CvReport,
    pub four_class_accuracy: f64,
    pub phase_only_four_class_accuracy: f64,
}

fn window_of(t: &Trace, w: usize, len: usize) -> Result<Trace> {
    t.window(w * len, len)
}

/// Build Stage-II samples for each domain's units. Each unit is augmented
/// once and the same copies are featurized in every domain that selected it.
pub fn stage_two_samples(ctx: &Context, selections: &[UnitSelection]) -> Result<Vec<Vec<SampleRecord>>> {
    let cfg = &ctx.config.classification;
    let mut wanted: BTreeMap<UnitKey, Vec<(usize, ClassLabel)>> = BTreeMap::new();
    for (d, sel) in selections.iter().enumerate() {
        for u in &sel.units {
            wanted.entry(u.key).or_default().push((d, u.label));
        }
    }
    let mut out: Vec<Vec<SampleRecord>> = vec![Vec::new(); selections.len()];
    let mut current: Option<(usize, crate::datagen::LabeledClip)> = None;
    for (key, uses) in wanted {
        if current.as_ref().map(|c| c.0) != Some(key.clip_index) {
            let clip = ctx.source.clip(key.clip_index).stage("stage-II clip")?;
            current = Some((key.clip_index, clip));
        }
        let clip = &current.as_ref().expect("clip loaded").1;
        let ctx_name = format!("stage-II unit {}/ch{}/w{}", clip.clip_id, key.channel, key.window);
        let single = clip.channel_clip(key.channel).stage(&ctx_name)?;
        let copies = if cfg.augment_copies > 0 {
            let seed = derive_seed(
                derive_seed(ctx.config.seed, key.clip_index as u64),
                (key.channel * ctx.n_windows + key.window) as u64,
            );
            augment(&single, cfg.augment_copies, seed).stage(&ctx_name)?
        } else {
            Vec::new()
        };
        let mut traces = Vec::with_capacity(2 * (1 + copies.len()));
        for c in std::iter::once(&single).chain(&copies) {
            let pair = &c.channels[0];
            traces.push(window_of(&pair.phase, key.window, ctx.window_len).stage(&ctx_name)?);
            traces.push(window_of(&pair.intensity, key.window, ctx.window_len).stage(&ctx_name)?);
        }
        for (d, label) in uses {
            let domain = selections[d].domain;
            let feats = ctx.space(domain).featurize(&traces).stage(&ctx_name)?;
            for (i, pair) in feats.chunks_exact(2).enumerate() {
                let (mut p, mut q) = (pair[0].clone(), pair[1].clone());
                for f in [&mut p, &mut q] {
                    f.channel = key.channel;
                    f.window_index = key.window;
                }
                let s = normalize_concat(&p, &q, label)
                    .stage(&ctx_name)?
                    .with_source(clip.clip_id.clone(), i > 0);
                out[d].push(SampleRecord {
                    key,
                    clip_id: clip.clip_id.clone(),
                    feature: s,
                });
            }
        }
    }
    Ok(out)
}

/// Stage-II in every domain: unit selection, augmentation, and grouped
/// cross-validation of stacked and phase-only features.
pub fn stage_two(ctx: &Context, detections: &[(Domain, Vec<WindowOutcome>)]) -> Result<Vec<DomainClassification>> {
    let cfg = &ctx.config.classification;
    let fill_seed = derive_seed(ctx.config.seed, 0x454e);
    let selections: Vec<UnitSelection> = detections
        .iter()
        .map(|(d, w)| select_units(ctx.source.as_ref(), *d, w, cfg.min_en_samples, ctx.n_windows, fill_seed))
        .collect();
    let samples = stage_two_samples(ctx, &selections)?;
    let cv_seed = derive_seed(ctx.config.seed, 0x4356);
    let mut result = Vec::new();
    for (sel, recs) in selections.into_iter().zip(samples) {
        let ctx_name = format!("stage-II {}", sel.domain.as_str());
        let data: Vec<StackedFeature> = recs.iter().map(|r| r.feature.clone()).collect();
        let stacked = cross_validate(&data, cfg.folds, cv_seed, &cfg.svm).stage(&ctx_name)?;
        let phase: Vec<StackedFeature> = data.iter().map(|s| s.phase_only()).collect();
        let phase_only = cross_validate(&phase, cfg.folds, cv_seed, &cfg.svm).stage(&ctx_name)?;
        let four = four_class_accuracy(&stacked.confusion).stage(&ctx_name)?;
        let four_p = four_class_accuracy(&phase_only.confusion).stage(&ctx_name)?;
        result.push(DomainClassification {
            domain: sel.domain,
            selection: sel,
            samples: recs,
            stacked,
            phase_only,
            four_class_accuracy: four,
            phase_only_four_class_accuracy: four_p,
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwoReport {
    pub units: usize,
    pub false_alarms: usize,
    pub quiet_fill: usize,
    /// True when quiet windows had to top up the EN class.
    pub quiet_fill_used: bool,
    pub samples: usize,
    pub accuracy: f64,
    pub four_class_accuracy: f64,
    pub phase_only_accuracy: f64,
    pub phase_only_four_class_accuracy: f64,
    pub converged: bool,
    /// Rows are truth and columns predictions, in TH, WD, JH, SH, EN order.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain: Domain,
    pub auc: f64,
    pub operating_point: OperatingPoint,
    pub baseline_windows: usize,
    pub positives: usize,
    pub negatives: usize,
    pub stage_two: Option<StageTwoReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mr: f64,
    pub reduction_ratio: f64,
    pub matrix_id: String,
    pub clips: usize,
    pub windows_per_domain: usize,
    pub domains: Vec<DomainReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_s: f64,
    pub stage_one_s: f64,
    pub stage_two_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub detections: Vec<DomainDetection>,
    pub classifications: Vec<DomainClassification>,
    pub timings: Timings,
}

pub fn stage_two_report(c: &DomainClassification) -> StageTwoReport {
    StageTwoReport {
        units: c.selection.units.len(),
        false_alarms: c.selection.false_alarms,
        quiet_fill: c.selection.quiet_fill,
        quiet_fill_used: c.selection.quiet_fill > 0,
        samples: c.samples.len(),
        accuracy: c.stacked.accuracy,
        four_class_accuracy: c.four_class_accuracy,
        phase_only_accuracy: c.phase_only.accuracy,
        phase_only_four_class_accuracy: c.phase_only_four_class_accuracy,
        converged: c.stacked.converged && c.phase_only.converged,
        confusion: c.stacked.confusion.counts().iter().map(|r| r.to_vec()).collect(),
    }
}

pub fn build_report(ctx: &Context, detections: &[DomainDetection], classifications: &[DomainClassification]) -> RunReport {
    let domains = detections
        .iter()
        .map(|d| {
            let positives = d.windows.iter().filter(|w| w.truth).count();
            DomainReport {
                domain: d.domain,
                auc: d.roc.auc,
                operating_point: d.operating_point,
                baseline_windows: d.baseline.n_windows(),
                positives,
                negatives: d.windows.len() - positives,
                stage_two: classifications.iter().find(|c| c.domain == d.domain).map(stage_two_report),
            }
        })
        .collect();
    RunReport {
        mr: ctx.config.matrix.mr,
        reduction_ratio: 1.0 - ctx.config.matrix.mr,
        matrix_id: ctx.matrix.id().to_string(),
        clips: ctx.source.len(),
        windows_per_domain: detections.first().map_or(0, |d| d.windows.len()),
        domains,
    }
}

/// Both stages in both domains.
pub fn run(config: RunConfig) -> Result<(Context, RunOutcome)> {
    let t = Instant::now();
    let ctx = Context::new(config)?;
    let setup_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let detections = stage_one(&ctx)?;
    let stage_one_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let inputs: Vec<(Domain, Vec<WindowOutcome>)> = detections.iter().map(|d| (d.domain, d.windows.clone())).collect();
    let classifications = stage_two(&ctx, &inputs)?;
    let stage_two_s = t.elapsed().as_secs_f64();
    let report = build_report(&ctx, &detections, &classifications);
    Ok((
        ctx,
        RunOutcome {
            report,
            detections,
            classifications,
            timings: Timings { setup_s, stage_one_s, stage_two_s },
        },
    ))
}

/// Run and write every output file into `dir`.
pub fn run_to_dir(config: RunConfig, dir: &Path) -> Result<(Context, RunOutcome)> {
    let (ctx, outcome) = run(config)?;
    export::write_run(&ctx, &outcome, dir).stage("export")?;
    Ok((ctx, outcome))
}
