//! OMP recovery of compressed traces in the Fourier basis, and the quality
//! and timing sweep over measurement ratio and sparsity.
//!
//! The dictionary is `D = phi * psi`, where column `k` of `psi` is the unit
//! Fourier atom `e^{2 pi i k n / N} / sqrt(N)`. Correlations against every
//! atom at once are the unitary DFT of `phi^T r`.

use std::f64::consts::PI;
use std::time::Instant;

use rustfft::num_complex::Complex64;

use crate::error::{param, Error, Result};
use crate::sensing::spectrum::{fft_in_place, unitary_idft};
use crate::sensing::{
    compress, make_observation_matrix, CompressedTrace, MatrixKind, ObservationMatrix, Trace,
};

/// Largest tolerated ratio between the biggest and smallest diagonal entry
/// of the least-squares triangular factor.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub reconstructed: Trace,
    /// Selected atoms with their fitted coefficients, in selection order.
    pub atoms: Vec<(usize, Complex64)>,
    pub k_used: usize,
    pub mr: f64,
    pub pcc: Option<f64>,
    pub wall_time_s: f64,
    /// Residual norm before the first iteration and after each one.
    pub residual_norms: Vec<f64>,
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

struct Dictionary<'a> {
    matrix: &'a ObservationMatrix,
    cos: Vec<f64>,
    sin: Vec<f64>,
    scale: f64,
}

impl<'a> Dictionary<'a> {
    fn new(matrix: &'a ObservationMatrix) -> Self {
        let n = matrix.cols();
        let (sin, cos) = (0..n).map(|t| (2.0 * PI * t as f64 / n as f64).sin_cos()).unzip();
        Dictionary { matrix, cos, sin, scale: 1.0 / (n as f64).sqrt() }
    }

    /// Column `k` of `phi * psi`.
    fn atom(&self, k: usize) -> Vec<Complex64> {
        let n = self.matrix.cols();
        let re: Vec<f64> = (0..n).map(|t| self.cos[(k * t) % n]).collect();
        let im: Vec<f64> = (0..n).map(|t| self.sin[(k * t) % n]).collect();
        let (re, im) = (self.matrix.apply(&re), self.matrix.apply(&im));
        re.into_iter()
            .zip(im)
            .map(|(a, b)| Complex64::new(a, b) * self.scale)
            .collect()
    }

    /// `D^H r` for every atom.
    fn correlate(&self, r: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = r.iter().map(|c| c.re).collect();
        let im: Vec<f64> = r.iter().map(|c| c.im).collect();
        let (re, im) = (self.matrix.apply_transpose(&re), self.matrix.apply_transpose(&im));
        let mut buf: Vec<Complex64> = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
        fft_in_place(&mut buf);
        for v in &mut buf {
            *v *= self.scale;
        }
        buf
    }
}

/// Orthogonal matching pursuit with `k` iterations. Stops early only when the
/// residual is exactly zero, since every further coefficient would be zero.
pub fn omp_reconstruct(
    y: &CompressedTrace,
    matrix: &ObservationMatrix,
    k: usize,
    reference: Option<&Trace>,
) -> Result<ReconstructionResult> {
    let m = matrix.rows();
    let n = matrix.cols();
    if y.len() != m || y.source_n() != n {
        return param(format!(
            "compressed trace ({} of {}) does not fit a {m}x{n} matrix",
            y.len(),
            y.source_n()
        ));
    }
    if k == 0 || k > m {
        return param(format!("k must lie in 1..={m}, got {k}"));
    }
    if let Some(r) = reference {
        if r.len() != n {
            return param(format!("reference has {} samples, expected {n}", r.len()));
        }
    }
    let start = Instant::now();
    let dict = Dictionary::new(matrix);
    let target: Vec<Complex64> = y.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut residual = target.clone();
    let mut residual_norms = vec![cnorm(&residual)];
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut r_factor: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut z: Vec<Complex64> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let (mut dmax, mut dmin) = (0.0f64, f64::INFINITY);

    for iter in 0..k {
        if residual_norms.last() == Some(&0.0) {
            break;
        }
        let corr = dict.correlate(&residual);
        let best = (0..n)
            .filter(|&j| !chosen[j])
            .max_by(|&a, &b| corr[a].norm_sqr().total_cmp(&corr[b].norm_sqr()).then(b.cmp(&a)))
            .expect("k <= m <= n leaves an unselected atom");
        chosen[best] = true;
        let atom = dict.atom(best);
        let atom_norm = cnorm(&atom);
        let mut v = atom;
        let mut col = vec![Complex64::new(0.0, 0.0); iter + 1];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = cdot(qi, &v);
                col[i] += c;
                for (vv, qq) in v.iter_mut().zip(qi) {
                    *vv -= c * qq;
                }
            }
        }
        let rho = cnorm(&v);
        dmax = dmax.max(rho);
        dmin = dmin.min(rho);
        if rho <= atom_norm * 1e-14 || dmax / dmin > MAX_CONDITION {
            return Err(Error::Numerical(format!(
                "least-squares subproblem singular at OMP iteration {} (atom {best})",
                iter + 1
            )));
        }
        col[iter] = Complex64::new(rho, 0.0);
        for vv in &mut v {
            *vv /= rho;
        }
        let zi = cdot(&v, &target);
        for (rr, vv) in residual.iter_mut().zip(&v) {
            *rr -= zi * vv;
        }
        q.push(v);
        r_factor.push(col);
        z.push(zi);
        selected.push(best);
        residual_norms.push(cnorm(&residual));
    }

    // back-substitution: column j of R is r_factor[j]
    let t = selected.len();
    let mut s = z.clone();
    for i in (0..t).rev() {
        for j in i + 1..t {
            let rij = r_factor[j][i];
            let sj = s[j];
            s[i] -= rij * sj;
        }
        s[i] /= r_factor[i][i];
    }
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (&idx, &c) in selected.iter().zip(&s) {
        spectrum[idx] = c;
    }
    let x: Vec<f64> = unitary_idft(&spectrum).into_iter().map(|c| c.re).collect();
    let wall_time_s = start.elapsed().as_secs_f64();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("OMP produced non-finite samples".into()));
    }
    let pcc = match reference {
        Some(r) => Some(pearson_correlation(r.samples(), &x)?),
        None => None,
    };
    let fs = reference.map_or(1.0, |r| r.sample_rate_hz());
    Ok(ReconstructionResult {
        reconstructed: Trace::new(x, fs, y.modality())?,
        atoms: selected.into_iter().zip(s).collect(),
        k_used: t,
        mr: matrix.mr(),
        pcc,
        wall_time_s,
        residual_norms,
    })
}

/// Sample Pearson correlation.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return param(format!("sequences have lengths {} and {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return param("correlation needs at least two samples");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("correlation of a constant sequence".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return param(format!("sequences have lengths {} and {}", a.len(), b.len()));
    }
    pearson_correlation(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mr: f64,
    pub k: usize,
    pub pcc: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: CellStatus,
}

/// Reconstruct `trace` for every `(mr, k)` pair, in ascending `(mr, k)`
/// order. Failing cells are recorded, not fatal.
pub fn sweep_reconstruction(trace: &Trace, mr_grid: &[f64], k_grid: &[usize], seed: u64) -> Result<Vec<SweepRow>> {
    sweep_reconstruction_with(trace, mr_grid, k_grid, seed, MatrixKind::RowOrthonormalGaussian)
}

pub fn sweep_reconstruction_with(
    trace: &Trace,
    mr_grid: &[f64],
    k_grid: &[usize],
    seed: u64,
    kind: MatrixKind,
) -> Result<Vec<SweepRow>> {
    if mr_grid.is_empty() || k_grid.is_empty() {
        return param("sweep grids must be non-empty");
    }
    if let Some(mr) = mr_grid.iter().find(|mr| !(**mr > 0.0 && **mr <= 1.0)) {
        return param(format!("measurement ratio {mr} outside (0, 1]"));
    }
    if k_grid.contains(&0) {
        return param("sparsity levels must be at least 1");
    }
    let mut mrs = mr_grid.to_vec();
    mrs.sort_by(f64::total_cmp);
    mrs.dedup();
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::with_capacity(mrs.len() * ks.len());
    for &mr in &mrs {
        let setup = make_observation_matrix(trace.len(), mr, seed, kind)
            .and_then(|phi| compress(&phi, trace).map(|y| (phi, y)));
        for &k in &ks {
            let cell = match &setup {
                Ok((phi, y)) => omp_reconstruct(y, phi, k, Some(trace)),
                Err(e) => Err(Error::Construction(e.to_string())),
            };
            rows.push(match cell {
                Ok(r) => SweepRow {
                    mr,
                    k,
                    pcc: r.pcc,
                    wall_time_s: Some(r.wall_time_s),
                    status: CellStatus::Ok,
                },
                Err(e) => SweepRow {
                    mr,
                    k,
                    pcc: None,
                    wall_time_s: None,
                    status: CellStatus::Failed(e.to_string()),
                },
            });
        }
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("mr,k,pcc,wall_time_s,status\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let status = match &r.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Failed(msg) => format!("failed: {msg}"),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.mr,
            r.k,
            opt(r.pcc),
            opt(r.wall_time_s),
            csv_field(&status)
        ));
    }
    out
}
