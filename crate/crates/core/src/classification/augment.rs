//! Clip augmentation: circular time shift, speed stretch (tempo change with
//! pitch kept, via WSOLA) and pitch change (plain resampling).
//!
//! Every channel and both modalities of a clip get the same transform, and
//! output length always equals input length.

use rand::Rng as _;

use crate::datagen::{ChannelPair, LabeledClip};
use crate::error::{param, Result};
use crate::rng;
use crate::sensing::{dot, Trace};

pub const DEFAULT_COPIES: usize = 9;
pub const MAX_SHIFT_S: f64 = 0.5;
pub const FACTOR_RANGE: (f64, f64) = (0.9, 1.1);

const OLA_FRAME: usize = 512;
const OLA_HOP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    /// Rotate right by this many samples (negative rotates left).
    TimeShift { samples: i64 },
    /// Play `factor` times faster, keeping frequency content.
    SpeedStretch { factor: f64 },
    /// Resample by `factor`; frequencies scale by `factor`.
    PitchChange { factor: f64 },
}

fn shift(x: &[f64], samples: i64) -> Vec<f64> {
    let n = x.len() as i64;
    let k = samples.rem_euclid(n) as usize;
    let mut out = x.to_vec();
    out.rotate_right(k);
    out
}

fn fit_length(mut y: Vec<f64>, n: usize) -> Vec<f64> {
    y.resize(n, 0.0);
    y
}

/// Linear-interpolation resampling: `y[t] = x(t * factor)`.
fn resample(x: &[f64], factor: f64) -> Vec<f64> {
    let n = x.len();
    let out_len = ((n - 1) as f64 / factor).floor() as usize + 1;
    (0..out_len)
        .map(|t| {
            let pos = t as f64 * factor;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                x[i] * (1.0 - frac) + x[i + 1] * frac
            } else {
                x[n - 1]
            }
        })
        .collect()
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / len as f64).cos())
        .collect()
}

/// Waveform-similarity overlap-add: output is about `n / factor` long and
/// keeps the local spectrum. Each frame's source position may move by up to
/// `WSOLA_TOLERANCE` samples to line up with the previous frame's natural
/// continuation.
fn time_stretch(x: &[f64], factor: f64) -> Vec<f64> {
    let n = x.len();
    let out_len = (n as f64 / factor).round() as usize;
    let frame = OLA_FRAME.min(n);
    let hop = OLA_HOP.min(frame);
    let window = hann(frame);
    let mut out = vec![0.0; out_len + frame];
    let mut weight = vec![0.0; out_len + frame];
    let mut prev: Option<usize> = None;
    let mut j = 0usize;
    while j * hop < out_len {
        let nominal = ((j * hop) as f64 * factor).round() as usize;
        let src = match prev {
            None => nominal,
            Some(p) => best_alignment(x, nominal, p + hop, hop),
        };
        let dst = j * hop;
        for t in 0..frame {
            let Some(&v) = x.get(src + t) else { break };
            out[dst + t] += window[t] * v;
            weight[dst + t] += window[t];
        }
        prev = Some(src);
        j += 1;
    }
    out.truncate(out_len);
    for (o, w) in out.iter_mut().zip(&weight) {
        if *w > 1e-6 {
            *o /= w;
        }
    }
    out
}

const WSOLA_TOLERANCE: usize = 48;

fn best_alignment(x: &[f64], nominal: usize, natural: usize, len: usize) -> usize {
    let n = x.len();
    if natural + len > n || nominal + len > n {
        return nominal;
    }
    let target = &x[natural..natural + len];
    let score = |c: usize| {
        let seg = &x[c..c + len];
        let e = dot(seg, seg);
        if e > 0.0 {
            dot(seg, target) / e.sqrt()
        } else {
            0.0
        }
    };
    // nearest candidates first; a farther one must win clearly
    let mut best = nominal;
    let mut best_score = score(nominal);
    for d in 1..=WSOLA_TOLERANCE {
        for cand in [nominal.checked_sub(d), Some(nominal + d)].into_iter().flatten() {
            if cand + len > n {
                continue;
            }
            let s = score(cand);
            if s > best_score + 1e-9 * best_score.abs().max(1e-300) {
                best_score = s;
                best = cand;
            }
        }
    }
    best
}

fn transform(x: &[f64], aug: Augmentation) -> Vec<f64> {
    match aug {
        Augmentation::TimeShift { samples } => shift(x, samples),
        Augmentation::SpeedStretch { factor } => fit_length(time_stretch(x, factor), x.len()),
        Augmentation::PitchChange { factor } => fit_length(resample(x, factor), x.len()),
    }
}

fn check(aug: Augmentation) -> Result<()> {
    match aug {
        Augmentation::TimeShift { .. } => Ok(()),
        Augmentation::SpeedStretch { factor } | Augmentation::PitchChange { factor } => {
            if factor > 0.0 && factor.is_finite() {
                Ok(())
            } else {
                param(format!("augmentation factor must be positive, got {factor}"))
            }
        }
    }
}

/// Apply one transform to every channel of a clip.
pub fn apply_augmentation(clip: &LabeledClip, aug: Augmentation) -> Result<LabeledClip> {
    check(aug)?;
    let redo = |t: &Trace| Trace::new(transform(t.samples(), aug), t.sample_rate_hz(), t.modality());
    let channels = clip
        .channels
        .iter()
        .map(|p| {
            Ok(ChannelPair {
                phase: redo(&p.phase)?,
                intensity: redo(&p.intensity)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledClip {
        channels,
        ..clip.clone()
    })
}

/// Draw `n_copies` transforms, each with a uniformly chosen method.
pub fn draw_augmentations(n_copies: usize, seed: u64, sample_rate_hz: f64) -> Vec<Augmentation> {
    let mut r = rng::stream(seed, 0);
    let max_shift = (MAX_SHIFT_S * sample_rate_hz).round() as i64;
    (0..n_copies)
        .map(|_| match r.random_range(0..3) {
            0 => Augmentation::TimeShift {
                samples: r.random_range(-max_shift..=max_shift),
            },
            1 => Augmentation::SpeedStretch {
                factor: r.random_range(FACTOR_RANGE.0..=FACTOR_RANGE.1),
            },
            _ => Augmentation::PitchChange {
                factor: r.random_range(FACTOR_RANGE.0..=FACTOR_RANGE.1),
            },
        })
        .collect()
}

/// `n_copies` augmented versions of `clip`. The originals are not included.
pub fn augment(clip: &LabeledClip, n_copies: usize, seed: u64) -> Result<Vec<LabeledClip>> {
    if n_copies == 0 {
        return param("n_copies must be at least 1");
    }
    if clip.n_samples() < 2 {
        return param(format!("clip {} is too short to augment", clip.clip_id));
    }
    draw_augmentations(n_copies, seed, clip.sample_rate_hz)
        .into_iter()
        .map(|a| apply_augmentation(clip, a))
        .collect()
}
