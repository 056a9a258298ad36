//! Frequency-band energies in the Nyquist and compressed domains.
//!
//! For band `i` the energy is `sum_k |F_i(k) X(k)|` over every DFT bin,
//! where `F_i` is the band filter's frequency response and `X` the unitary
//! spectrum of the analysed window. The compressed-domain version uses the
//! projected filter `F_c,i` and the spectrum of `y = phi x` instead.

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledClip;
use crate::error::{param, Result};
use crate::filterbank::{CompressedFilterBank, FilterBank};
use crate::sensing::spectrum::unitary_magnitudes;
use crate::sensing::{compress_batch, dot, CompressedTrace, Modality, ObservationMatrix, Trace};

pub const DEFAULT_WINDOW_S: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Nyquist,
    Compressed,
}

impl Domain {
    pub const BOTH: [Domain; 2] = [Domain::Nyquist, Domain::Compressed];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Nyquist => "nyquist",
            Domain::Compressed => "compressed",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nyquist" => Ok(Domain::Nyquist),
            "compressed" => Ok(Domain::Compressed),
            other => param(format!("unknown domain {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub band_energies: Vec<f64>,
    pub modality: Modality,
    pub domain: Domain,
    pub channel: usize,
    pub window_index: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.band_energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band_energies.is_empty()
    }
}

fn band_energies(signal: &[f64], magnitude_responses: &[Vec<f64>]) -> Vec<f64> {
    let spectrum = unitary_magnitudes(signal);
    magnitude_responses.iter().map(|h| dot(h, &spectrum)).collect()
}

/// Nyquist-domain band energies of one window.
pub fn fbe(trace: &Trace, bank: &FilterBank) -> Result<FeatureVector> {
    if trace.len() != bank.n() {
        return param(format!("trace length {} does not match bank length {}", trace.len(), bank.n()));
    }
    Ok(FeatureVector {
        band_energies: band_energies(trace.samples(), bank.magnitude_responses()),
        modality: trace.modality(),
        domain: Domain::Nyquist,
        channel: 0,
        window_index: 0,
    })
}

/// Compressed-domain band energies of one compressed window.
pub fn cfbe(ctrace: &CompressedTrace, cbank: &CompressedFilterBank) -> Result<FeatureVector> {
    if ctrace.len() != cbank.m() {
        return param(format!(
            "compressed length {} does not match compressed bank length {}",
            ctrace.len(),
            cbank.m()
        ));
    }
    if ctrace.matrix_id() != cbank.matrix_id() {
        return param(format!(
            "trace compressed with {} but bank projected with {}",
            ctrace.matrix_id(),
            cbank.matrix_id()
        ));
    }
    Ok(FeatureVector {
        band_energies: band_energies(ctrace.samples(), cbank.magnitude_responses()),
        modality: ctrace.modality(),
        domain: Domain::Compressed,
        channel: 0,
        window_index: 0,
    })
}

/// Where features are computed.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSpace<'a> {
    Nyquist(&'a FilterBank),
    Compressed {
        bank: &'a CompressedFilterBank,
        matrix: &'a ObservationMatrix,
    },
}

impl FeatureSpace<'_> {
    pub fn domain(&self) -> Domain {
        match self {
            FeatureSpace::Nyquist(_) => Domain::Nyquist,
            FeatureSpace::Compressed { .. } => Domain::Compressed,
        }
    }

    /// Featurize windows that all have the bank's length. Compressed mode
    /// measures the whole batch with one matrix product.
    pub fn featurize(&self, windows: &[Trace]) -> Result<Vec<FeatureVector>> {
        match *self {
            FeatureSpace::Nyquist(bank) => windows.iter().map(|w| fbe(w, bank)).collect(),
            FeatureSpace::Compressed { bank, matrix } => {
                let refs: Vec<&Trace> = windows.iter().collect();
                compress_batch(matrix, &refs)?.iter().map(|y| cfbe(y, bank)).collect()
            }
        }
    }
}

/// Samples per analysis window.
pub fn window_len(window_s: f64, sample_rate_hz: f64) -> usize {
    (window_s * sample_rate_hz).round() as usize
}

/// Number of whole windows in `n_samples`; a trailing partial window is dropped.
pub fn window_count(n_samples: usize, window_len: usize) -> usize {
    n_samples.checked_div(window_len).unwrap_or(0)
}

/// A `(channel, window)` location in a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowRef {
    pub channel: usize,
    pub window: usize,
}

/// Featurize the listed windows of a clip in one feature space.
///
/// Output order is `picks` order, and within a pick `modalities` order.
pub fn extract_windows(
    clip: &LabeledClip,
    space: &FeatureSpace<'_>,
    window_len: usize,
    picks: &[WindowRef],
    modalities: &[Modality],
) -> Result<Vec<FeatureVector>> {
    let (bank_n, fs) = match space {
        FeatureSpace::Nyquist(b) => (b.n(), b.sample_rate_hz()),
        FeatureSpace::Compressed { matrix, .. } => (matrix.cols(), clip.sample_rate_hz),
    };
    if window_len != bank_n {
        return param(format!("window length {window_len} does not match feature length {bank_n}"));
    }
    if (fs - clip.sample_rate_hz).abs() > 1e-9 * fs {
        return param(format!(
            "clip sample rate {} Hz does not match bank rate {fs} Hz",
            clip.sample_rate_hz
        ));
    }
    let n_windows = window_count(clip.n_samples(), window_len);
    if n_windows == 0 {
        return param(format!(
            "window of {window_len} samples is longer than clip {} ({} samples)",
            clip.clip_id,
            clip.n_samples()
        ));
    }
    let mut traces = Vec::with_capacity(picks.len() * modalities.len());
    for pick in picks {
        let Some(pair) = clip.channels.get(pick.channel) else {
            return param(format!("clip {} has no channel {}", clip.clip_id, pick.channel));
        };
        if pick.window >= n_windows {
            return param(format!("clip {} has no window {}", clip.clip_id, pick.window));
        }
        for &m in modalities {
            traces.push(pair.get(m).window(pick.window * window_len, window_len)?);
        }
    }
    let mut out = space.featurize(&traces)?;
    for (i, fv) in out.iter_mut().enumerate() {
        let pick = picks[i / modalities.len()];
        fv.channel = pick.channel;
        fv.window_index = pick.window;
    }
    Ok(out)
}

/// Every `(channel, window)` of a clip, channel-major.
pub fn all_windows(clip: &LabeledClip, window_len: usize) -> Vec<WindowRef> {
    let n_windows = window_count(clip.n_samples(), window_len);
    (0..clip.channels.len())
        .flat_map(|channel| (0..n_windows).map(move |window| WindowRef { channel, window }))
        .collect()
}

/// Phase and intensity features of one `(channel, window)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub channel: usize,
    pub window: usize,
    pub phase: FeatureVector,
    pub intensity: FeatureVector,
}

/// Split every channel of a clip into non-overlapping windows and extract
/// phase and intensity band energies. Passing a compressed bank and its
/// matrix switches to compressed-domain features.
pub fn extract_clip_features(
    clip: &LabeledClip,
    bank: &FilterBank,
    compressed: Option<(&CompressedFilterBank, &ObservationMatrix)>,
    window_s: f64,
) -> Result<Vec<WindowFeatures>> {
    let len = window_len(window_s, clip.sample_rate_hz);
    if len == 0 || len > clip.n_samples() {
        return param(format!(
            "window of {window_s} s is longer than clip {} ({} s)",
            clip.clip_id, clip.duration_s
        ));
    }
    let space = match compressed {
        Some((cbank, matrix)) => {
            if cbank.matrix_id() != matrix.id() {
                return param("compressed bank was projected with a different matrix");
            }
            FeatureSpace::Compressed { bank: cbank, matrix }
        }
        None => FeatureSpace::Nyquist(bank),
    };
    let picks = all_windows(clip, len);
    let feats = extract_windows(clip, &space, len, &picks, &[Modality::Phase, Modality::Intensity])?;
    let mut it = feats.into_iter();
    Ok(picks
        .iter()
        .map(|p| WindowFeatures {
            channel: p.channel,
            window: p.window,
            phase: it.next().expect("phase feature"),
            intensity: it.next().expect("intensity feature"),
        })
        .collect())
}
