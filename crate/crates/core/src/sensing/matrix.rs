use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng;

/// Measurement ensemble of an [`ObservationMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// i.i.d. N(0, 1/M) entries.
    Gaussian,
    /// The Gaussian draw with its rows orthonormalized, so `phi phi^T = I`.
    RowOrthonormalGaussian,
    /// `I_N`; only valid with a measurement ratio of 1.
    Identity,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Gaussian => "gaussian",
            MatrixKind::RowOrthonormalGaussian => "row_orthonormal_gaussian",
            MatrixKind::Identity => "identity",
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(MatrixKind::Gaussian),
            "row_orthonormal_gaussian" | "row_orthonormal" => Ok(MatrixKind::RowOrthonormalGaussian),
            "identity" => Ok(MatrixKind::Identity),
            other => param(format!("unknown matrix kind {other:?}")),
        }
    }
}

/// Identifier of an observation matrix, derived from its construction
/// parameters. Compressed traces and compressed filter banks carry it so
/// that mismatched pairs are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatrixId(String);

impl MatrixId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MatrixId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Construction parameters; this is what gets written to manifests; the
/// entries themselves are always regenerated from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixParams {
    pub n: usize,
    pub mr: f64,
    pub seed: u64,
    pub kind: MatrixKind,
}

#[derive(Debug, Clone)]
enum Storage {
    Identity,
    /// Row-major M x N.
    Dense(Vec<f64>),
}

/// Fixed M x N compressive measurement operator.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    params: MatrixParams,
    rows: usize,
    storage: Storage,
    id: MatrixId,
}

/// Number of measurements for `n` samples at ratio `mr`.
pub fn measurement_count(n: usize, mr: f64) -> usize {
    (mr * n as f64).round() as usize
}

/// Build the observation matrix for `(n, mr, seed, kind)`.
///
/// The result is a pure function of its arguments. Gaussian entries come
/// from ChaCha8 stream 0 of `seed`, drawn row by row.
pub fn make_observation_matrix(
    n: usize,
    mr: f64,
    seed: u64,
    kind: MatrixKind,
) -> Result<ObservationMatrix> {
    if n < 2 {
        return param(format!("matrix needs n >= 2, got {n}"));
    }
    if !(mr > 0.0 && mr <= 1.0) {
        return param(format!("measurement ratio must lie in (0, 1], got {mr}"));
    }
    let m = measurement_count(n, mr);
    if m < 1 {
        return param(format!("round({mr} * {n}) = 0 measurements"));
    }
    let params = MatrixParams { n, mr, seed, kind };
    let id = MatrixId(format!("{kind}:n={n}:m={m}:seed={seed}"));
    let storage = match kind {
        MatrixKind::Identity => {
            if m != n {
                return param(format!("identity matrix requires mr = 1, got {mr}"));
            }
            Storage::Identity
        }
        MatrixKind::Gaussian => Storage::Dense(gaussian_entries(m, n, seed)),
        MatrixKind::RowOrthonormalGaussian => {
            let mut entries = gaussian_entries(m, n, seed);
            orthonormalize_rows(&mut entries, m, n)?;
            Storage::Dense(entries)
        }
    };
    Ok(ObservationMatrix {
        params,
        rows: m,
        storage,
        id,
    })
}

fn gaussian_entries(m: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0);
    let scale = 1.0 / (m as f64).sqrt();
    (0..m * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

const GS_BLOCK: usize = 32;

/// Block classical Gram-Schmidt over the rows of a row-major `m x n` matrix.
///
/// Projections against finished blocks go through GEMM. A block is
/// projected a second time when any of its rows lost more than half its
/// norm in the first pass; inside a block, rows are handled by modified
/// Gram-Schmidt with one reorthogonalization.
fn orthonormalize_rows(a: &mut [f64], m: usize, n: usize) -> Result<()> {
    let mut start = 0;
    while start < m {
        let end = (start + GS_BLOCK).min(m);
        let b = end - start;
        let (done, rest) = a.split_at_mut(start * n);
        let block = &mut rest[..b * n];
        let before: Vec<f64> = block.chunks(n).map(norm).collect();
        if start > 0 {
            project_out(done, start, block, b, n);
            let needs_second = block
                .chunks(n)
                .zip(&before)
                .any(|(row, &nb)| norm(row) < 0.5 * nb);
            if needs_second {
                project_out(done, start, block, b, n);
            }
        }
        for i in 0..b {
            let (prev, cur) = block.split_at_mut(i * n);
            let row = &mut cur[..n];
            for _ in 0..2 {
                for q in prev.chunks(n) {
                    let c = dot(q, row);
                    axpy(-c, q, row);
                }
            }
            let nr = norm(row);
            if !(nr > 1e-12 * before[i]) || nr == 0.0 {
                return Err(Error::Construction(format!(
                    "Gram-Schmidt found row {} linearly dependent (rank < {m})",
                    start + i
                )));
            }
            let inv = 1.0 / nr;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        start = end;
    }
    Ok(())
}

/// `block -= (block Q^T) Q` for the `k` orthonormal rows in `q`.
fn project_out(q: &[f64], k: usize, block: &mut [f64], b: usize, n: usize) {
    let mut coeff = vec![0.0; b * k];
    // coeff (b x k) = block (b x n) * q^T (n x k)
    unsafe {
        matrixmultiply::dgemm(
            b,
            n,
            k,
            1.0,
            block.as_ptr(),
            n as isize,
            1,
            q.as_ptr(),
            1,
            n as isize,
            0.0,
            coeff.as_mut_ptr(),
            k as isize,
            1,
        );
        // block (b x n) -= coeff (b x k) * q (k x n)
        matrixmultiply::dgemm(
            b,
            k,
            n,
            -1.0,
            coeff.as_ptr(),
            k as isize,
            1,
            q.as_ptr(),
            n as isize,
            1,
            1.0,
            block.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorizes.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl ObservationMatrix {
    /// Matrix with explicit entries, for hand-checked examples.
    #[cfg(test)]
    pub(crate) fn from_rows(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        ObservationMatrix {
            params: MatrixParams {
                n: cols,
                mr: rows as f64 / cols as f64,
                seed: 0,
                kind: MatrixKind::Gaussian,
            },
            rows,
            storage: Storage::Dense(entries),
            id: MatrixId(format!("explicit:{rows}x{cols}")),
        }
    }

    pub fn params(&self) -> MatrixParams {
        self.params
    }

    pub fn id(&self) -> &MatrixId {
        &self.id
    }

    pub fn kind(&self) -> MatrixKind {
        self.params.kind
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }

    pub fn mr(&self) -> f64 {
        self.params.mr
    }

    /// Number of measurements M.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Signal length N.
    pub fn cols(&self) -> usize {
        self.params.n
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.storage, Storage::Identity)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Identity => f64::from(u8::from(i == j)),
            Storage::Dense(e) => e[i * self.params.n + j],
        }
    }

    /// Row `i` as a dense vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let n = self.params.n;
        match &self.storage {
            Storage::Identity => {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            }
            Storage::Dense(e) => e[i * n..(i + 1) * n].to_vec(),
        }
    }

    /// Row-major dense copy of the entries.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(e) => e.clone(),
            Storage::Identity => {
                let n = self.params.n;
                let mut e = vec![0.0; n * n];
                for i in 0..n {
                    e[i * n + i] = 1.0;
                }
                e
            }
        }
    }

    /// `phi x` for a length-N vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.params.n);
        match &self.storage {
            Storage::Identity => x.to_vec(),
            Storage::Dense(e) => e.chunks(self.params.n).map(|row| dot(row, x)).collect(),
        }
    }

    /// `phi^T z` for a length-M vector.
    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.rows);
        match &self.storage {
            Storage::Identity => z.to_vec(),
            Storage::Dense(e) => {
                let mut out = vec![0.0; self.params.n];
                for (row, &w) in e.chunks(self.params.n).zip(z) {
                    axpy(w, row, &mut out);
                }
                out
            }
        }
    }

    /// Apply to a batch of length-N columns at once.
    ///
    /// `xs` holds `count` vectors back to back; the result holds `count`
    /// length-M vectors back to back.
    pub fn apply_batch(&self, xs: &[f64], count: usize) -> Vec<f64> {
        let n = self.params.n;
        let m = self.rows;
        debug_assert_eq!(xs.len(), n * count);
        match &self.storage {
            Storage::Identity => xs.to_vec(),
            Storage::Dense(e) => {
                let mut out = vec![0.0; m * count];
                // out viewed as M x count with column stride M is (count x M) row-major.
                unsafe {
                    matrixmultiply::dgemm(
                        m,
                        n,
                        count,
                        1.0,
                        e.as_ptr(),
                        n as isize,
                        1,
                        xs.as_ptr(),
                        1,
                        n as isize,
                        0.0,
                        out.as_mut_ptr(),
                        1,
                        m as isize,
                    );
                }
                out
            }
        }
    }

    /// Gram matrix `phi phi^T` (M x M, row-major).
    pub fn gram(&self) -> Vec<f64> {
        let m = self.rows;
        let n = self.params.n;
        match &self.storage {
            Storage::Identity => {
                let mut g = vec![0.0; m * m];
                for i in 0..m {
                    g[i * m + i] = 1.0;
                }
                g
            }
            Storage::Dense(e) => {
                let mut g = vec![0.0; m * m];
                unsafe {
                    matrixmultiply::dgemm(
                        m,
                        n,
                        m,
                        1.0,
                        e.as_ptr(),
                        n as isize,
                        1,
                        e.as_ptr(),
                        1,
                        n as isize,
                        0.0,
                        g.as_mut_ptr(),
                        m as isize,
                        1,
                    );
                }
                g
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_identity() {
        let phi = make_observation_matrix(8, 1.0, 99, MatrixKind::Identity).unwrap();
        assert_eq!(phi.rows(), 8);
        let d = phi.to_dense();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(d[i * 8 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn identity_rejects_partial_ratio() {
        assert!(matches!(
            make_observation_matrix(8, 0.5, 0, MatrixKind::Identity),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn rejects_bad_ratio() {
        for mr in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                make_observation_matrix(16, mr, 0, MatrixKind::Gaussian),
                Err(Error::Parameter(_))
            ));
        }
        assert!(make_observation_matrix(1, 1.0, 0, MatrixKind::Gaussian).is_err());
        assert!(make_observation_matrix(10, 0.01, 0, MatrixKind::Gaussian).is_err());
    }

    #[test]
    fn paper_scale_row_count() {
        assert_eq!(measurement_count(8000, 0.3), 2400);
    }

    #[test]
    fn row_orthonormal_gram_is_identity() {
        let phi = make_observation_matrix(16, 0.5, 3, MatrixKind::RowOrthonormalGaussian).unwrap();
        assert_eq!(phi.rows(), 8);
        let e = phi.to_dense();
        // explicit product oracle
        for i in 0..8 {
            for j in 0..8 {
                let s: f64 = (0..16).map(|k| e[i * 16 + k] * e[j * 16 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-10, "({i},{j}) = {s}");
            }
        }
    }

    #[test]
    fn square_row_orthonormal_needs_reorthogonalization() {
        let n = 96;
        let phi = make_observation_matrix(n, 1.0, 5, MatrixKind::RowOrthonormalGaussian).unwrap();
        let g = phi.gram();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[i * n + j] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_observation_matrix(40, 0.3, 11, MatrixKind::Gaussian).unwrap();
        let b = make_observation_matrix(40, 0.3, 11, MatrixKind::Gaussian).unwrap();
        let c = make_observation_matrix(40, 0.3, 12, MatrixKind::Gaussian).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
        assert_ne!(a.to_dense(), c.to_dense());
        assert_eq!(a.id(), b.id());
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn gaussian_variance_is_one_over_m() {
        let phi = make_observation_matrix(2000, 0.25, 1, MatrixKind::Gaussian).unwrap();
        let e = phi.to_dense();
        let var = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        let want = 1.0 / 500.0;
        assert!((var - want).abs() < 0.02 * want, "{var} vs {want}");
    }

    #[test]
    fn batch_matches_single_apply() {
        let phi = make_observation_matrix(50, 0.4, 2, MatrixKind::Gaussian).unwrap();
        let xs: Vec<f64> = (0..150).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let batch = phi.apply_batch(&xs, 3);
        for c in 0..3 {
            let single = phi.apply(&xs[c * 50..(c + 1) * 50]);
            for (a, b) in single.iter().zip(&batch[c * 20..(c + 1) * 20]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
