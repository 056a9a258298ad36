//! FFT helpers shared by every module.
//!
//! Two scalings are in use. Signals are analysed with the unitary DFT
//! (`1/sqrt(N)` in both directions) so the Fourier basis is orthonormal.
//! Filter frequency responses use the plain forward DFT, which is the
//! filter's true gain per bin; with that pairing the unitary spectrum of a
//! circularly filtered signal has bin magnitudes `|F(k)| * |X(k)|`.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward transform, unnormalized.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse transform, unnormalized.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

/// Plain forward DFT of a real sequence: `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf
}

/// Unitary forward DFT of a real sequence.
pub fn unitary_dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf = fft_real(x);
    let scale = 1.0 / (x.len() as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Unitary inverse DFT.
pub fn unitary_idft(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    ifft_in_place(&mut buf);
    let scale = 1.0 / (coeffs.len() as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Bin magnitudes of the unitary DFT of `x`.
pub fn unitary_magnitudes(x: &[f64]) -> Vec<f64> {
    unitary_dft(x).iter().map(|c| c.norm()).collect()
}

/// Circular convolution `(a * b)[j] = sum_i a[i] b[(j - i) mod n]`, computed
/// directly over the nonzero entries of the sparser operand.
///
/// The direct form is exact when one side is a unit impulse, which the
/// identity-projection paths rely on.
pub fn circular_convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let nnz = |s: &[f64]| s.iter().filter(|v| **v != 0.0).count();
    let (sparse, dense) = if nnz(a) <= nnz(b) { (a, b) } else { (b, a) };
    let mut out = vec![0.0; n];
    for (i, &w) in sparse.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        // out[j] += w * dense[(j - i) mod n]
        let (head, tail) = out.split_at_mut(i);
        for (o, d) in tail.iter_mut().zip(&dense[..n - i]) {
            *o += w * d;
        }
        for (o, d) in head.iter_mut().zip(&dense[n - i..]) {
            *o += w * d;
        }
    }
    out
}
