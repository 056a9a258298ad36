use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::label::ClassLabel;
use crate::rng::Rng;
use crate::sensing::spectrum::{fft_in_place, ifft_in_place};

const DEFAULT_TEMPLATES: &str = include_str!("templates.toml");

/// Signal generator for one event class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Template {
    Rumble {
        corner_hz: f64,
        am_rate_hz: [f64; 2],
        am_depth: f64,
    },
    Harmonic {
        f0_hz: [f64; 2],
        harmonics: usize,
        rolloff: f64,
        crackle: f64,
    },
    ImpulseTrain {
        rate_hz: [f64; 2],
        resonance_hz: [f64; 2],
        decay_s: f64,
    },
    Bursts {
        interval_s: [f64; 2],
        burst_len_s: [f64; 2],
        corner_hz: f64,
        decay_s: f64,
    },
}

/// Templates keyed by class code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet(BTreeMap<String, Template>);

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("template table: {e}")))
    }

    pub fn get(&self, label: ClassLabel) -> Result<&Template> {
        self.0
            .get(label.code())
            .map_or_else(|| param(format!("no template for class {label}")), Ok)
    }
}

fn uniform(rng: &mut Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn white(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// White noise shaped by a first-order low-pass magnitude response.
fn shaped_noise(rng: &mut Rng, n: usize, fs: f64, corner_hz: f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = white(rng, n).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k) as f64;
        let f = bin * fs / n as f64;
        *z *= 1.0 / (1.0 + (f / corner_hz).powi(2)).sqrt();
    }
    ifft_in_place(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

impl Template {
    /// Render `n` samples at `fs`, normalized to unit RMS.
    pub fn render(&self, rng: &mut Rng, n: usize, fs: f64) -> Vec<f64> {
        let mut s = match *self {
            Template::Rumble {
                corner_hz,
                am_rate_hz,
                am_depth,
            } => {
                let rate = uniform(rng, am_rate_hz);
                let phase = rng.random_range(0.0..2.0 * PI);
                let mut s = shaped_noise(rng, n, fs, corner_hz);
                for (t, v) in s.iter_mut().enumerate() {
                    *v *= 1.0 + am_depth * (2.0 * PI * rate * t as f64 / fs + phase).sin();
                }
                s
            }
            Template::Harmonic {
                f0_hz,
                harmonics,
                rolloff,
                crackle,
            } => {
                let f0 = uniform(rng, f0_hz);
                let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
                let mut tone: Vec<f64> = (0..n)
                    .map(|t| {
                        (1..=harmonics)
                            .zip(&phases)
                            .filter(|(h, _)| *h as f64 * f0 < fs / 2.0)
                            .map(|(h, p)| (2.0 * PI * h as f64 * f0 * t as f64 / fs + p).sin() / (h as f64).powf(rolloff))
                            .sum()
                    })
                    .collect();
                normalize_rms(&mut tone);
                let mut hiss = white(rng, n);
                normalize_rms(&mut hiss);
                let (a, b) = ((1.0 - crackle).sqrt(), crackle.sqrt());
                tone.iter().zip(&hiss).map(|(t, h)| a * t + b * h).collect()
            }
            Template::ImpulseTrain {
                rate_hz,
                resonance_hz,
                decay_s,
            } => {
                let period = (fs / uniform(rng, rate_hz)).round().max(1.0) as usize;
                let fr = uniform(rng, resonance_hz);
                let len = ((5.0 * decay_s * fs).ceil() as usize).max(1);
                let pulse: Vec<f64> = (0..len)
                    .map(|k| {
                        let t = k as f64 / fs;
                        (-t / decay_s).exp() * (2.0 * PI * fr * t).sin()
                    })
                    .collect();
                let mut s = vec![0.0; n];
                let mut start = rng.random_range(0..period);
                while start < n {
                    for (k, p) in pulse.iter().enumerate() {
                        if start + k < n {
                            s[start + k] += p;
                        }
                    }
                    start += period;
                }
                s
            }
            Template::Bursts {
                interval_s,
                burst_len_s,
                corner_hz,
                decay_s,
            } => {
                let mut s = vec![0.0; n];
                let mut t = uniform(rng, [0.0, interval_s[1]]);
                while ((t * fs) as usize) < n {
                    let start = (t * fs) as usize;
                    let len = ((uniform(rng, burst_len_s) * fs) as usize).max(1);
                    let burst = shaped_noise(rng, len, fs, corner_hz);
                    for (k, b) in burst.iter().enumerate() {
                        if start + k < n {
                            s[start + k] += b * (-(k as f64) / (decay_s * fs)).exp();
                        }
                    }
                    t += uniform(rng, interval_s);
                }
                s
            }
        };
        normalize_rms(&mut s);
        s
    }
}
