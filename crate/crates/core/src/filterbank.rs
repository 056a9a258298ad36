//! FIR band-pass filter bank, circulant filtering and projection of filters
//! into the compressed domain.
//!
//! The circulant of a filter `f` is the `n x n` matrix whose first row is
//! `f` and whose every following row is the previous one rotated one place
//! to the right: `A[i][j] = f[(j - i) mod n]`. Its compressed counterpart is
//! `A_c = phi A phi^T (phi phi^T)^-1`, and the compressed filter `f_c` is the
//! first row of `A_c`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::sensing::spectrum::{circular_convolve_direct, fft_in_place, fft_real, ifft_in_place};
use crate::sensing::{MatrixId, MatrixKind, ObservationMatrix};

pub const DEFAULT_BANDS: usize = 50;
pub const DEFAULT_BAND_WIDTH_HZ: f64 = 30.0;
pub const DEFAULT_TAPS: usize = 511;

/// Largest tolerated condition estimate of `phi phi^T`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub index: usize,
}

/// Windowed-sinc (Hamming) linear-phase FIR band-pass.
///
/// Built as the difference of two low-passes, each scaled to unit DC gain.
/// With `lo_hz == 0` the result is a plain low-pass, and `hi_hz` at Nyquist
/// turns the upper low-pass into a unit impulse.
pub fn design_bandpass(sample_rate_hz: f64, lo_hz: f64, hi_hz: f64, taps: usize) -> Result<Vec<f64>> {
    if taps < 3 || taps.is_multiple_of(2) {
        return param(format!("taps must be odd and >= 3, got {taps}"));
    }
    if !(sample_rate_hz > 0.0) {
        return param(format!("sample rate must be positive, got {sample_rate_hz}"));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz <= nyquist) {
        return param(format!(
            "band [{lo_hz}, {hi_hz}) Hz outside [0, {nyquist}] Hz or empty"
        ));
    }
    let window = hamming(taps);
    let mut h = windowed_lowpass(hi_hz / sample_rate_hz, &window);
    if lo_hz > 0.0 {
        let low = windowed_lowpass(lo_hz / sample_rate_hz, &window);
        h.iter_mut().zip(&low).for_each(|(a, b)| *a -= b);
    }
    Ok(h)
}

fn hamming(taps: usize) -> Vec<f64> {
    let denom = (taps - 1) as f64;
    (0..taps)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Low-pass with cutoff in cycles/sample, normalized to unit DC gain.
fn windowed_lowpass(cutoff: f64, window: &[f64]) -> Vec<f64> {
    let centre = (window.len() - 1) as f64 / 2.0;
    let mut h: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let t = i as f64 - centre;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Construction parameters of a [`FilterBank`]; banks are persisted as these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankParams {
    pub sample_rate_hz: f64,
    pub n: usize,
    pub n_bands: usize,
    pub band_width_hz: f64,
    pub taps: usize,
}

impl BankParams {
    pub fn new(sample_rate_hz: f64, n: usize) -> Self {
        Self {
            sample_rate_hz,
            n,
            n_bands: DEFAULT_BANDS,
            band_width_hz: DEFAULT_BAND_WIDTH_HZ,
            taps: DEFAULT_TAPS,
        }
    }
}

/// Nyquist-domain filter bank: impulse responses zero-padded to `n` and
/// their forward DFTs.
#[derive(Debug, Clone)]
pub struct FilterBank {
    params: BankParams,
    bands: Vec<BandSpec>,
    impulse_responses: Vec<Vec<f64>>,
    frequency_responses: Vec<Vec<Complex64>>,
    magnitude_responses: Vec<Vec<f64>>,
}

pub fn build_filter_bank(params: BankParams) -> Result<FilterBank> {
    let BankParams {
        sample_rate_hz,
        n,
        n_bands,
        band_width_hz,
        taps,
    } = params;
    if n_bands == 0 || !(band_width_hz > 0.0) {
        return param("filter bank needs at least one band of positive width");
    }
    if n_bands as f64 * band_width_hz > sample_rate_hz / 2.0 {
        return param(format!(
            "{n_bands} bands of {band_width_hz} Hz exceed Nyquist ({} Hz)",
            sample_rate_hz / 2.0
        ));
    }
    if taps > n {
        return param(format!("{taps} taps do not fit in length {n}"));
    }
    let mut bands = Vec::with_capacity(n_bands);
    let mut impulse_responses = Vec::with_capacity(n_bands);
    for index in 0..n_bands {
        let band = BandSpec {
            lo_hz: index as f64 * band_width_hz,
            hi_hz: (index + 1) as f64 * band_width_hz,
            index,
        };
        let mut h = design_bandpass(sample_rate_hz, band.lo_hz, band.hi_hz, taps)?;
        h.resize(n, 0.0);
        bands.push(band);
        impulse_responses.push(h);
    }
    Ok(FilterBank::from_parts(params, bands, impulse_responses))
}

impl FilterBank {
    fn from_parts(params: BankParams, bands: Vec<BandSpec>, impulse_responses: Vec<Vec<f64>>) -> Self {
        let frequency_responses: Vec<Vec<Complex64>> =
            impulse_responses.iter().map(|h| fft_real(h)).collect();
        let magnitude_responses = frequency_responses
            .iter()
            .map(|f| f.iter().map(|z| z.norm()).collect())
            .collect();
        Self {
            params,
            bands,
            impulse_responses,
            frequency_responses,
            magnitude_responses,
        }
    }

    pub fn params(&self) -> BankParams {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.params.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    pub fn impulse_responses(&self) -> &[Vec<f64>] {
        &self.impulse_responses
    }

    pub fn frequency_responses(&self) -> &[Vec<Complex64>] {
        &self.frequency_responses
    }

    /// `|F_i(k)|` per band.
    pub fn magnitude_responses(&self) -> &[Vec<f64>] {
        &self.magnitude_responses
    }

    /// The same bank with band `i` of the result taken from band `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<FilterBank> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= self.len() || std::mem::replace(&mut seen[i], true)) {
            return param("band order is not a permutation");
        }
        Ok(Self {
            params: self.params,
            bands: order.iter().map(|&i| self.bands[i]).collect(),
            impulse_responses: order.iter().map(|&i| self.impulse_responses[i].clone()).collect(),
            frequency_responses: order.iter().map(|&i| self.frequency_responses[i].clone()).collect(),
            magnitude_responses: order.iter().map(|&i| self.magnitude_responses[i].clone()).collect(),
        })
    }
}

/// Dense circulant of `f` (row-major, first row `f`).
pub fn circulant_matrix(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = f[(j + n - i) % n];
        }
    }
    a
}

/// `h = A x` for the circulant `A` of `impulse_response`.
///
/// Evaluated in the frequency domain: the spectrum of `A x` is
/// `conj(F) . X`, which has the same bin magnitudes as the convolution
/// spectrum `F . X`.
pub fn circulant_apply(impulse_response: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if impulse_response.len() != x.len() {
        return param(format!(
            "filter length {} does not match signal length {}",
            impulse_response.len(),
            x.len()
        ));
    }
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let f = fft_real(impulse_response);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    for (b, fk) in buf.iter_mut().zip(&f) {
        *b *= fk.conj();
    }
    ifft_in_place(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|z| z.re * scale).collect())
}

/// Lower-triangular Cholesky factor of `phi phi^T`, present only when the
/// Gram matrix is not the identity.
struct GramFactor {
    m: usize,
    lower: Vec<f64>,
}

impl GramFactor {
    fn for_matrix(matrix: &ObservationMatrix) -> Result<Option<Self>> {
        match matrix.kind() {
            MatrixKind::Identity | MatrixKind::RowOrthonormalGaussian => Ok(None),
            MatrixKind::Gaussian => {
                let m = matrix.rows();
                let lower = cholesky(matrix.gram(), m)?;
                Ok(Some(Self { m, lower }))
            }
        }
    }

    /// Solve `G v = r` in place.
    fn solve(&self, r: &mut [f64]) {
        let (m, l) = (self.m, &self.lower);
        for i in 0..m {
            let s = r[i] - dot_prefix(&l[i * m..i * m + i], &r[..i]);
            r[i] = s / l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = r[i];
            for k in i + 1..m {
                s -= l[k * m + i] * r[k];
            }
            r[i] = s / l[i * m + i];
        }
    }
}

fn dot_prefix(a: &[f64], b: &[f64]) -> f64 {
    crate::sensing::dot(a, b)
}

/// Cholesky factorization with a diagonal-ratio condition estimate.
fn cholesky(mut a: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    for j in 0..m {
        let d = a[j * m + j] - dot_prefix(&a[j * m..j * m + j], &a[j * m..j * m + j]);
        if !(d > 0.0) {
            return Err(Error::Numerical(format!(
                "phi phi^T is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let ljj = d.sqrt();
        a[j * m + j] = ljj;
        for i in j + 1..m {
            let s = a[i * m + j] - dot_prefix(&a[i * m..i * m + j], &a[j * m..j * m + j]);
            a[i * m + j] = s / ljj;
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            a[i * m + j] = 0.0;
        }
    }
    let diag: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
    let hi = diag.iter().copied().fold(0.0, f64::max);
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = (hi / lo).powi(2);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::Numerical(format!(
            "phi phi^T is ill-conditioned (condition estimate {cond:e} > {MAX_GRAM_CONDITION:e})"
        )));
    }
    Ok(a)
}

/// Projects filters through one observation matrix.
struct Projector<'a> {
    matrix: &'a ObservationMatrix,
    first_row: Vec<f64>,
    gram: Option<GramFactor>,
}

impl<'a> Projector<'a> {
    fn new(matrix: &'a ObservationMatrix) -> Result<Self> {
        Ok(Self {
            matrix,
            first_row: matrix.row(0),
            gram: GramFactor::for_matrix(matrix)?,
        })
    }

    /// First rows of `A_c` for each filter.
    fn project(&self, filters: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.matrix.cols();
        let m = self.matrix.rows();
        if let Some(f) = filters.iter().find(|f| f.len() != n) {
            return param(format!("filter length {} does not match matrix columns {n}", f.len()));
        }
        // Row 0 of phi A is the circular convolution of phi's first row with f.
        let mut stacked = Vec::with_capacity(n * filters.len());
        for f in filters {
            stacked.extend(circular_convolve_direct(&self.first_row, f));
        }
        // Row 0 of phi A phi^T, for every filter at once.
        let rows = self.matrix.apply_batch(&stacked, filters.len());
        Ok(rows
            .chunks(m)
            .map(|r| {
                let mut r = r.to_vec();
                if let Some(g) = &self.gram {
                    g.solve(&mut r);
                }
                r
            })
            .collect())
    }
}

/// Compressed filter `f_c`: the first row of `phi A phi^T (phi phi^T)^-1`.
///
/// For row-orthonormal and identity matrices the Gram inverse is skipped.
pub fn project_filter(impulse_response: &[f64], matrix: &ObservationMatrix) -> Result<Vec<f64>> {
    let projector = Projector::new(matrix)?;
    Ok(projector.project(&[impulse_response])?.remove(0))
}

/// Materialized `A_c` (M x M, row-major). Memory is O(N^2); small `n` only.
pub fn compressed_operator(impulse_response: &[f64], matrix: &ObservationMatrix) -> Result<Vec<f64>> {
    let n = matrix.cols();
    let m = matrix.rows();
    if impulse_response.len() != n {
        return param(format!("filter length {} does not match matrix columns {n}", impulse_response.len()));
    }
    let a = circulant_matrix(impulse_response);
    let phi = matrix.to_dense();
    // phi A (m x n)
    let mut phi_a = vec![0.0; m * n];
    for i in 0..m {
        for k in 0..n {
            let p = phi[i * n + k];
            if p != 0.0 {
                for j in 0..n {
                    phi_a[i * n + j] += p * a[k * n + j];
                }
            }
        }
    }
    // phi A phi^T (m x m)
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = crate::sensing::dot(&phi_a[i * n..(i + 1) * n], &phi[j * n..(j + 1) * n]);
        }
    }
    if let Some(g) = GramFactor::for_matrix(matrix)? {
        // Right-multiplying by G^-1 (G symmetric): solve G x_i = row_i.
        for row in out.chunks_mut(m) {
            g.solve(row);
        }
    }
    Ok(out)
}

/// Compressed-domain bank: `f_c` per band and its forward DFT `F_c`.
#[derive(Debug, Clone)]
pub struct CompressedFilterBank {
    bands: Vec<BandSpec>,
    impulse_responses: Vec<Vec<f64>>,
    frequency_responses: Vec<Vec<Complex64>>,
    magnitude_responses: Vec<Vec<f64>>,
    matrix_id: MatrixId,
    m: usize,
}

pub fn project_filter_bank(bank: &FilterBank, matrix: &ObservationMatrix) -> Result<CompressedFilterBank> {
    if bank.n() != matrix.cols() {
        return param(format!(
            "bank length {} does not match matrix columns {}",
            bank.n(),
            matrix.cols()
        ));
    }
    let projector = Projector::new(matrix)?;
    let filters: Vec<&[f64]> = bank.impulse_responses().iter().map(Vec::as_slice).collect();
    let impulse_responses = projector.project(&filters)?;
    for (i, f) in impulse_responses.iter().enumerate() {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("projection of band {i} is not finite")));
        }
    }
    let frequency_responses: Vec<Vec<Complex64>> =
        impulse_responses.iter().map(|h| fft_real(h)).collect();
    let magnitude_responses = frequency_responses
        .iter()
        .map(|f| f.iter().map(|z| z.norm()).collect())
        .collect();
    Ok(CompressedFilterBank {
        bands: bank.bands().to_vec(),
        impulse_responses,
        frequency_responses,
        magnitude_responses,
        matrix_id: matrix.id().clone(),
        m: matrix.rows(),
    })
}

impl CompressedFilterBank {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix_id(&self) -> &MatrixId {
        &self.matrix_id
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    pub fn impulse_responses(&self) -> &[Vec<f64>] {
        &self.impulse_responses
    }

    pub fn frequency_responses(&self) -> &[Vec<Complex64>] {
        &self.frequency_responses
    }

    pub fn magnitude_responses(&self) -> &[Vec<f64>] {
        &self.magnitude_responses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sensing::make_observation_matrix;
    use rand::Rng;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn sinusoid(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * freq * t as f64 / fs).sin()).collect()
    }

    fn padded(h: &[f64], n: usize) -> Vec<f64> {
        let mut v = h.to_vec();
        v.resize(n, 0.0);
        v
    }

    #[test]
    fn full_band_lowpass_keeps_white_noise_energy() {
        let h = design_bandpass(10_000.0, 0.0, 5_000.0, 511).unwrap();
        let mut r = rng::stream(1, 0);
        let x: Vec<f64> = (0..4096).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = circulant_apply(&padded(&h, 4096), &x).unwrap();
        let ratio = y.iter().map(|v| v * v).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
        assert!(ratio >= 0.99, "energy ratio {ratio}");
    }

    #[test]
    fn narrow_band_passes_and_rejects() {
        let fs = 10_000.0;
        let n = 8000;
        let h = padded(&design_bandpass(fs, 90.0, 120.0, 511).unwrap(), n);
        // 105 Hz and 400 Hz both complete whole cycles in 0.8 s, so circular filtering is steady-state.
        let pass = rms(&circulant_apply(&h, &sinusoid(105.0, fs, n)).unwrap()) / rms(&sinusoid(105.0, fs, n));
        let stop = rms(&circulant_apply(&h, &sinusoid(400.0, fs, n)).unwrap()) / rms(&sinusoid(400.0, fs, n));
        assert!((0.7..=1.1).contains(&pass), "passband gain {pass}");
        assert!(20.0 * stop.log10() <= -20.0, "stopband gain {stop}");
    }

    #[test]
    fn lowpass_dc_gain_is_unity() {
        let h = design_bandpass(10_000.0, 0.0, 30.0, 511).unwrap();
        let dc: f64 = h.iter().sum();
        assert!((dc - 1.0).abs() < 0.01);
        let bp = design_bandpass(10_000.0, 30.0, 60.0, 511).unwrap();
        assert!(bp.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn design_rejects_bad_arguments() {
        assert!(design_bandpass(10_000.0, 0.0, 100.0, 510).is_err());
        assert!(design_bandpass(10_000.0, 0.0, 100.0, 1).is_err());
        assert!(design_bandpass(10_000.0, 100.0, 6_000.0, 511).is_err());
        assert!(design_bandpass(10_000.0, 200.0, 100.0, 511).is_err());
    }

    #[test]
    fn default_bank_tiles_zero_to_1500() {
        let bank = build_filter_bank(BankParams::new(10_000.0, 8000)).unwrap();
        assert_eq!(bank.len(), 50);
        let last = bank.bands()[49];
        assert_eq!((last.lo_hz, last.hi_hz), (1470.0, 1500.0));
        for w in bank.bands().windows(2) {
            assert_eq!(w[0].hi_hz, w[1].lo_hz);
        }
        assert!(bank.impulse_responses().iter().all(|h| h.len() == 8000));
    }

    #[test]
    fn single_full_band_bank() {
        let params = BankParams {
            n_bands: 1,
            band_width_hz: 5000.0,
            taps: 31,
            ..BankParams::new(10_000.0, 64)
        };
        let bank = build_filter_bank(params).unwrap();
        assert_eq!(bank.len(), 1);
        // full-band low-pass collapses to a unit impulse at the centre tap
        let h = &bank.impulse_responses()[0];
        assert!((h[15] - 1.0).abs() < 1e-12);
        assert!(h.iter().enumerate().all(|(i, v)| i == 15 || v.abs() < 1e-12));
    }

    #[test]
    fn bank_rejects_overfull_spec() {
        let params = BankParams {
            n_bands: 200,
            ..BankParams::new(10_000.0, 8000)
        };
        assert!(build_filter_bank(params).is_err());
        let params = BankParams {
            taps: 511,
            ..BankParams::new(10_000.0, 256)
        };
        assert!(build_filter_bank(params).is_err());
    }

    #[test]
    fn circulant_identity_and_shift() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let mut delta = vec![0.0; 5];
        delta[0] = 1.0;
        let h = circulant_apply(&delta, &x).unwrap();
        for (a, b) in h.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut shift = vec![0.0; 5];
        shift[1] = 1.0;
        let h = circulant_apply(&shift, &x).unwrap();
        let rotated = [2.0, 3.0, 4.0, 5.0, 1.0];
        for (a, b) in h.iter().zip(&rotated) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(circulant_apply(&shift, &x[..4]).is_err());
    }

    #[test]
    fn circulant_matches_explicit_matrix() {
        let mut r = rng::stream(8, 0);
        let f: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = circulant_matrix(&f);
        // rows rotate right
        for i in 1..8 {
            for j in 0..8 {
                assert_eq!(a[i * 8 + j], a[(i - 1) * 8 + (j + 7) % 8]);
            }
        }
        let want: Vec<f64> = (0..8).map(|i| (0..8).map(|j| a[i * 8 + j] * x[j]).sum()).collect();
        let got = circulant_apply(&f, &x).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0));
        }
    }

    #[test]
    fn identity_projection_returns_filter_exactly() {
        let phi = make_observation_matrix(64, 1.0, 0, MatrixKind::Identity).unwrap();
        let mut r = rng::stream(2, 0);
        let f: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
        assert_eq!(project_filter(&f, &phi).unwrap(), f);
    }

    #[test]
    fn unit_filter_projects_to_unit_impulse() {
        let mut delta = vec![0.0; 32];
        delta[0] = 1.0;
        for kind in [MatrixKind::RowOrthonormalGaussian, MatrixKind::Gaussian] {
            let phi = make_observation_matrix(32, 0.5, 6, kind).unwrap();
            let fc = project_filter(&delta, &phi).unwrap();
            assert!((fc[0] - 1.0).abs() < 1e-10, "{kind}: {}", fc[0]);
            assert!(fc[1..].iter().all(|v| v.abs() < 1e-10), "{kind}");
            let ac = compressed_operator(&delta, &phi).unwrap();
            for i in 0..16 {
                for j in 0..16 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ac[i * 16 + j] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn projected_first_row_matches_materialized_operator() {
        for kind in [MatrixKind::RowOrthonormalGaussian, MatrixKind::Gaussian] {
            let phi = make_observation_matrix(24, 0.5, 9, kind).unwrap();
            let mut r = rng::stream(10, 0);
            let f: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
            let fc = project_filter(&f, &phi).unwrap();
            let ac = compressed_operator(&f, &phi).unwrap();
            for j in 0..12 {
                assert!((fc[j] - ac[j]).abs() < 1e-10, "{kind} {j}");
            }
            // re-extracting the first row of circulant(f_c) gives back f_c
            assert_eq!(&circulant_matrix(&fc)[..12], fc.as_slice());
        }
    }

    #[test]
    fn row_space_commutation() {
        let phi = make_observation_matrix(16, 0.5, 3, MatrixKind::RowOrthonormalGaussian).unwrap();
        let mut r = rng::stream(4, 0);
        let f: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
        let ac = compressed_operator(&f, &phi).unwrap();
        let a = circulant_matrix(&f);
        for _ in 0..10 {
            let z: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
            let x = phi.apply_transpose(&z);
            let y = phi.apply(&x);
            let lhs: Vec<f64> = (0..8).map(|i| crate::sensing::dot(&ac[i * 8..(i + 1) * 8], &y)).collect();
            let ax: Vec<f64> = (0..16).map(|i| crate::sensing::dot(&a[i * 16..(i + 1) * 16], &x)).collect();
            let rhs = phi.apply(&ax);
            let diff: f64 = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(diff <= 1e-6 * scale);
        }
    }

    #[test]
    fn projection_is_linear() {
        let phi = make_observation_matrix(40, 0.3, 12, MatrixKind::Gaussian).unwrap();
        let mut r = rng::stream(13, 0);
        let f: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = project_filter(&combo, &phi).unwrap();
        let pf = project_filter(&f, &phi).unwrap();
        let pg = project_filter(&g, &phi).unwrap();
        for i in 0..lhs.len() {
            let rhs = a * pf[i] + b * pg[i];
            assert!((lhs[i] - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn identity_bank_projection_is_unchanged() {
        let params = BankParams {
            n_bands: 4,
            taps: 31,
            ..BankParams::new(10_000.0, 128)
        };
        let bank = build_filter_bank(params).unwrap();
        let phi = make_observation_matrix(128, 1.0, 0, MatrixKind::Identity).unwrap();
        let cbank = project_filter_bank(&bank, &phi).unwrap();
        assert_eq!(cbank.impulse_responses(), bank.impulse_responses());
        assert_eq!(cbank.frequency_responses(), bank.frequency_responses());
    }

    #[test]
    fn projection_is_deterministic_and_sized() {
        let params = BankParams {
            n_bands: 5,
            taps: 63,
            ..BankParams::new(10_000.0, 400)
        };
        let bank = build_filter_bank(params).unwrap();
        let phi = make_observation_matrix(400, 0.3, 7, MatrixKind::RowOrthonormalGaussian).unwrap();
        let a = project_filter_bank(&bank, &phi).unwrap();
        let b = project_filter_bank(&bank, &phi).unwrap();
        assert_eq!(a.m(), 120);
        assert!(a.impulse_responses().iter().all(|f| f.len() == 120));
        assert_eq!(a.impulse_responses(), b.impulse_responses());
        assert_eq!(a.frequency_responses(), b.frequency_responses());
    }

    #[test]
    fn ill_conditioned_gram_is_rejected() {
        // A square Gaussian draw is badly conditioned at this size.
        let phi = make_observation_matrix(400, 1.0, 1, MatrixKind::Gaussian).unwrap();
        let f = vec![0.0; 400];
        match project_filter(&f, &phi) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("condition")),
            Ok(_) => {} // some draws are still acceptably conditioned
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
