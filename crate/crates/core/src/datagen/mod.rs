//! Synthetic multi-channel DAS recordings.
//!
//! Each clip covers `n_channels` fiber positions. Event clips carry the
//! class template on one vibration channel; every other channel (and every
//! channel of a quiet clip) is white noise at `noise_level` RMS. The
//! intensity modality is a half-amplitude copy of the phase signal with its
//! own noise. Samples are rounded to `f32` precision when generated, which
//! makes the on-disk format lossless.

mod store;
mod templates;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::label::ClassLabel;
use crate::rng;
use crate::sensing::{Modality, Trace};

pub use store::{load_dataset, save_dataset, DiskDataset, MANIFEST_FILE};
pub use templates::{Template, TemplateSet};

/// Amplitude of the intensity copy relative to the phase signal.
pub const INTENSITY_GAIN: f64 = 0.5;

/// Vibration position as a fraction of fiber length (5.02 km of 5.2 km).
pub const DEFAULT_VIBRATION_POSITION: f64 = 5.02 / 5.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub clips_per_class: usize,
    pub classes: Vec<ClassLabel>,
    pub n_channels: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub vibration_position: f64,
    pub templates: TemplateSet,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            clips_per_class: 40,
            classes: ClassLabel::EVENTS.to_vec(),
            n_channels: 32,
            duration_s: 3.0,
            sample_rate_hz: 10_000.0,
            noise_level: 0.1,
            seed: 0,
            vibration_position: DEFAULT_VIBRATION_POSITION,
            templates: TemplateSet::default(),
        }
    }
}

impl DatasetSpec {
    /// Desk-scale configuration: two clips per class.
    pub fn smoke() -> Self {
        Self {
            clips_per_class: 2,
            n_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips_per_class < 1 {
            return param("clips_per_class must be >= 1");
        }
        if self.n_channels < 1 {
            return param("n_channels must be >= 1");
        }
        if self.classes.is_empty() || self.classes.contains(&ClassLabel::EN) {
            return param("classes must list event classes only");
        }
        if !(self.sample_rate_hz > 0.0 && self.duration_s > 0.0) {
            return param("duration and sample rate must be positive");
        }
        if !(self.noise_level > 0.0) {
            return param("noise_level must be positive");
        }
        if !(0.0..=1.0).contains(&self.vibration_position) {
            return param("vibration_position must lie in [0, 1]");
        }
        if self.n_samples() < 2 {
            return param("clip shorter than two samples");
        }
        for label in &self.classes {
            self.templates.get(*label)?;
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn vibration_channel(&self) -> usize {
        (self.vibration_position * (self.n_channels - 1) as f64).round() as usize
    }

    /// Clip table: every event class in order, then the quiet clips.
    pub fn entries(&self) -> Vec<ClipEntry> {
        let labels = self.classes.iter().copied().chain(std::iter::once(ClassLabel::EN));
        let mut out = Vec::new();
        for label in labels {
            for _ in 0..self.clips_per_class {
                let clip_seed = out.len() as u64;
                out.push(ClipEntry {
                    clip_id: format!("{}-{clip_seed:04}", label.code()),
                    label,
                    clip_seed,
                    n_channels: self.n_channels,
                    n_samples: self.n_samples(),
                    vibration_channel: label.is_event().then(|| self.vibration_channel()),
                });
            }
        }
        out
    }
}

/// Manifest row describing one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    pub label: ClassLabel,
    pub clip_seed: u64,
    pub n_channels: usize,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vibration_channel: Option<usize>,
}

/// Phase and intensity traces of one fiber position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub phase: Trace,
    pub intensity: Trace,
}

impl ChannelPair {
    pub fn get(&self, modality: Modality) -> &Trace {
        match modality {
            Modality::Phase => &self.phase,
            Modality::Intensity => &self.intensity,
        }
    }
}

/// One labelled multi-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub clip_id: String,
    pub label: ClassLabel,
    pub channels: Vec<ChannelPair>,
    pub vibration_channel: Option<usize>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl LabeledClip {
    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, |c| c.phase.len())
    }

    /// Single-channel clip holding channel `channel` of this one. The
    /// vibration channel is kept (as index 0) only if it was the one taken.
    pub fn channel_clip(&self, channel: usize) -> Result<LabeledClip> {
        let Some(pair) = self.channels.get(channel) else {
            return param(format!("clip {} has no channel {channel}", self.clip_id));
        };
        Ok(LabeledClip {
            clip_id: self.clip_id.clone(),
            label: self.label,
            channels: vec![pair.clone()],
            vibration_channel: (self.vibration_channel == Some(channel)).then_some(0),
            duration_s: self.duration_s,
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Generate one clip. A pure function of `(label, spec, clip_seed)`.
pub fn synthesize_clip(label: ClassLabel, spec: &DatasetSpec, clip_seed: u64) -> Result<LabeledClip> {
    spec.validate()?;
    let n = spec.n_samples();
    let fs = spec.sample_rate_hz;
    let seed = rng::derive_seed(spec.seed, clip_seed);
    let vibration_channel = label.is_event().then(|| spec.vibration_channel());
    let template = match label {
        ClassLabel::EN => None,
        _ => {
            let mut r = rng::stream(seed, 0);
            Some(spec.templates.get(label)?.render(&mut r, n, fs))
        }
    };
    let mut noise = rng::stream(seed, 1);
    let mut channels = Vec::with_capacity(spec.n_channels);
    for ch in 0..spec.n_channels {
        let signal = template.as_deref().filter(|_| Some(ch) == vibration_channel);
        let mut render = |gain: f64| -> Vec<f64> {
            (0..n)
                .map(|t| {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    let s = signal.map_or(0.0, |s| gain * s[t]);
                    quantize(s + spec.noise_level * z)
                })
                .collect()
        };
        let phase = render(1.0);
        let intensity = render(INTENSITY_GAIN);
        channels.push(ChannelPair {
            phase: Trace::new(phase, fs, Modality::Phase)?,
            intensity: Trace::new(intensity, fs, Modality::Intensity)?,
        });
    }
    Ok(LabeledClip {
        clip_id: format!("{}-{clip_seed:04}", label.code()),
        label,
        channels,
        vibration_channel,
        duration_s: spec.duration_s,
        sample_rate_hz: fs,
    })
}

/// A dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub entries: Vec<ClipEntry>,
    pub clips: Vec<LabeledClip>,
}

pub fn synthesize_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let entries = spec.entries();
    let clips = entries
        .iter()
        .map(|e| synthesize_clip(e.label, spec, e.clip_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        entries,
        clips,
    })
}

/// Random access to the clips of a dataset without holding all of them.
pub trait ClipSource: Sync {
    fn spec(&self) -> &DatasetSpec;
    fn entries(&self) -> &[ClipEntry];
    fn clip(&self, index: usize) -> Result<LabeledClip>;

    fn len(&self) -> usize {
        self.entries().len()
    }

    fn is_empty(&self) -> bool {
        self.entries().is_empty()
    }
}

impl ClipSource for Dataset {
    fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    fn entries(&self) -> &[ClipEntry] {
        &self.entries
    }

    fn clip(&self, index: usize) -> Result<LabeledClip> {
        self.clips
            .get(index)
            .cloned()
            .map_or_else(|| param(format!("no clip {index}")), Ok)
    }
}

/// Clips generated on demand from a spec.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    spec: DatasetSpec,
    entries: Vec<ClipEntry>,
}

impl SyntheticSource {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let entries = spec.entries();
        Ok(Self { spec, entries })
    }
}

impl ClipSource for SyntheticSource {
    fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    fn entries(&self) -> &[ClipEntry] {
        &self.entries
    }

    fn clip(&self, index: usize) -> Result<LabeledClip> {
        let Some(e) = self.entries.get(index) else {
            return param(format!("no clip {index}"));
        };
        synthesize_clip(e.label, &self.spec, e.clip_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn quiet_clip_is_noise_floor() {
        let spec = DatasetSpec::smoke();
        let clip = synthesize_clip(ClassLabel::EN, &spec, 3).unwrap();
        assert_eq!(clip.vibration_channel, None);
        for ch in &clip.channels {
            assert!(rms(ch.phase.samples()) <= 3.0 * spec.noise_level);
        }
    }

    #[test]
    fn event_clip_has_one_loud_channel() {
        let spec = DatasetSpec::smoke();
        let clip = synthesize_clip(ClassLabel::WD, &spec, 1).unwrap();
        let vib = clip.vibration_channel.unwrap();
        assert_eq!(vib, spec.vibration_channel());
        for (i, ch) in clip.channels.iter().enumerate() {
            let r = rms(ch.phase.samples());
            if i == vib {
                assert!(r > 0.9);
                let ri = rms(ch.intensity.samples());
                assert!((ri - 0.5).abs() < 0.05, "intensity rms {ri}");
            } else {
                assert!(r < 3.0 * spec.noise_level);
            }
        }
        assert_eq!(clip.n_samples(), 30_000);
    }

    #[test]
    fn jackhammer_envelope_repeats_at_hammer_rate() {
        let spec = DatasetSpec::smoke();
        let fs = spec.sample_rate_hz;
        for seed in 0..4 {
            let clip = synthesize_clip(ClassLabel::JH, &spec, seed).unwrap();
            let x = clip.channels[clip.vibration_channel.unwrap()].phase.samples();
            // envelope: |x| smoothed over 2 ms
            let w = (0.002 * fs) as usize;
            let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
            let env: Vec<f64> = abs.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect();
            let mean = env.iter().sum::<f64>() / env.len() as f64;
            let centred: Vec<f64> = env.iter().map(|v| v - mean).collect();
            // biased autocorrelation over lags 40 ms .. 300 ms
            let (lo, hi) = ((0.04 * fs) as usize, (0.3 * fs) as usize);
            let best = (lo..hi)
                .max_by(|&a, &b| {
                    let ac = |lag: usize| -> f64 {
                        centred[..centred.len() - lag].iter().zip(&centred[lag..]).map(|(p, q)| p * q).sum()
                    };
                    ac(a).total_cmp(&ac(b))
                })
                .unwrap();
            let lag_s = best as f64 / fs;
            assert!((1.0 / 15.0..=1.0 / 8.0).contains(&lag_s), "seed {seed}: lag {lag_s}");
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = DatasetSpec::smoke();
        let a = synthesize_clip(ClassLabel::SH, &spec, 5).unwrap();
        let b = synthesize_clip(ClassLabel::SH, &spec, 5).unwrap();
        assert_eq!(a, b);
        let c = synthesize_clip(ClassLabel::SH, &spec, 6).unwrap();
        assert_ne!(a.channels[0].phase, c.channels[0].phase);
    }

    #[test]
    fn dataset_shapes() {
        let spec = DatasetSpec::smoke();
        let entries = spec.entries();
        assert_eq!(entries.len(), 10);
        let paper = DatasetSpec::default().entries();
        assert_eq!(paper.len(), 200);
        assert_eq!(paper.iter().filter(|e| e.label.is_event()).count(), 160);
        let ids: std::collections::HashSet<_> = paper.iter().map(|e| &e.clip_id).collect();
        assert_eq!(ids.len(), 200);
    }

    #[test]
    fn dataset_is_deterministic() {
        let spec = DatasetSpec {
            clips_per_class: 1,
            n_channels: 2,
            duration_s: 0.2,
            ..DatasetSpec::default()
        };
        assert_eq!(synthesize_dataset(&spec).unwrap(), synthesize_dataset(&spec).unwrap());
    }

    #[test]
    fn spec_validation() {
        let bad = DatasetSpec {
            clips_per_class: 0,
            ..DatasetSpec::smoke()
        };
        assert!(bad.validate().is_err());
        let bad = DatasetSpec {
            classes: vec![ClassLabel::EN],
            ..DatasetSpec::smoke()
        };
        assert!(bad.validate().is_err());
    }
}
