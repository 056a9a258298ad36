//! Traces, compressive measurement and Fourier-basis analysis.

mod matrix;
pub mod spectrum;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

pub use matrix::{
    make_observation_matrix, measurement_count, MatrixId, MatrixKind, MatrixParams,
    ObservationMatrix,
};
pub(crate) use matrix::dot;

/// Which demodulated quantity a trace carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Phase,
    Intensity,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Phase => "phase",
            Modality::Intensity => "intensity",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(Modality::Phase),
            "intensity" => Ok(Modality::Intensity),
            other => param(format!("unknown modality {other:?}")),
        }
    }
}

/// One channel's Nyquist-domain window.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    modality: Modality,
}

impl Trace {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, modality: Modality) -> Result<Self> {
        if samples.len() < 2 {
            return param(format!("trace needs at least 2 samples, got {}", samples.len()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return param(format!("sample rate must be positive, got {sample_rate_hz}"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return param(format!("trace sample {i} is not finite"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            modality,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Copy of samples `[start, start + len)` as a new trace.
    pub fn window(&self, start: usize, len: usize) -> Result<Trace> {
        if start + len > self.samples.len() {
            return param(format!(
                "window [{start}, {}) exceeds trace length {}",
                start + len,
                self.samples.len()
            ));
        }
        Trace::new(
            self.samples[start..start + len].to_vec(),
            self.sample_rate_hz,
            self.modality,
        )
    }
}

/// A trace after compressive measurement, `y = phi x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTrace {
    samples: Vec<f64>,
    source_n: usize,
    matrix_id: MatrixId,
    modality: Modality,
}

impl CompressedTrace {
    pub fn new(
        samples: Vec<f64>,
        source_n: usize,
        matrix_id: MatrixId,
        modality: Modality,
    ) -> Result<Self> {
        if samples.is_empty() || samples.len() > source_n {
            return param(format!(
                "compressed length {} incompatible with source length {source_n}",
                samples.len()
            ));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return param(format!("compressed sample {i} is not finite"));
        }
        Ok(Self {
            samples,
            source_n,
            matrix_id,
            modality,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn matrix_id(&self) -> &MatrixId {
        &self.matrix_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }
}

/// `y = phi x`.
pub fn compress(matrix: &ObservationMatrix, trace: &Trace) -> Result<CompressedTrace> {
    check_cols(matrix, trace)?;
    Ok(CompressedTrace {
        samples: matrix.apply(trace.samples()),
        source_n: trace.len(),
        matrix_id: matrix.id().clone(),
        modality: trace.modality(),
    })
}

/// Compress many traces with one matrix product. Results are in input order.
pub fn compress_batch(matrix: &ObservationMatrix, traces: &[&Trace]) -> Result<Vec<CompressedTrace>> {
    if traces.is_empty() {
        return Ok(Vec::new());
    }
    let n = matrix.cols();
    let mut stacked = Vec::with_capacity(n * traces.len());
    for t in traces {
        check_cols(matrix, t)?;
        stacked.extend_from_slice(t.samples());
    }
    let m = matrix.rows();
    let ys = matrix.apply_batch(&stacked, traces.len());
    Ok(traces
        .iter()
        .zip(ys.chunks(m))
        .map(|(t, y)| CompressedTrace {
            samples: y.to_vec(),
            source_n: n,
            matrix_id: matrix.id().clone(),
            modality: t.modality(),
        })
        .collect())
}

fn check_cols(matrix: &ObservationMatrix, trace: &Trace) -> Result<()> {
    if trace.len() != matrix.cols() {
        return param(format!(
            "trace length {} does not match matrix columns {}",
            trace.len(),
            matrix.cols()
        ));
    }
    Ok(())
}

/// Coefficients of the trace in the orthonormal Fourier basis (unitary DFT).
pub fn dft_coefficients(trace: &Trace) -> Vec<Complex64> {
    spectrum::unitary_dft(trace.samples())
}

/// Synthesis from Fourier coefficients; the inverse of [`dft_coefficients`].
pub fn inverse_dft(coeffs: &[Complex64]) -> Vec<Complex64> {
    spectrum::unitary_idft(coeffs)
}

/// Sorted, max-normalized Fourier magnitudes of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityProfile {
    pub sorted_magnitudes: Vec<f64>,
    /// `(fraction, K)`: K is the first sorted index whose magnitude is at or
    /// below `fraction` of the peak, or N if none is.
    pub k_at_fraction: Vec<(f64, usize)>,
}

impl SparsityProfile {
    pub fn k_at(&self, fraction: f64) -> Option<usize> {
        self.k_at_fraction
            .iter()
            .find(|(f, _)| *f == fraction)
            .map(|&(_, k)| k)
    }
}

pub const DEFAULT_SPARSITY_FRACTION: f64 = 0.01;

pub fn sparsity_profile(trace: &Trace, fractions: &[f64]) -> Result<SparsityProfile> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return param(format!("sparsity fraction must lie in (0, 1), got {f}"));
    }
    let mut mags = spectrum::unitary_magnitudes(trace.samples());
    let peak = mags.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Degenerate("all-zero trace has no sparsity profile".into()));
    }
    mags.iter_mut().for_each(|m| *m /= peak);
    mags.sort_by(|a, b| b.total_cmp(a));
    let k_at_fraction = fractions
        .iter()
        .map(|&f| {
            let k = mags.iter().position(|&m| m <= f).unwrap_or(mags.len());
            (f, k)
        })
        .collect();
    Ok(SparsityProfile {
        sorted_magnitudes: mags,
        k_at_fraction,
    })
}
