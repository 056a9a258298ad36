//! Multiclass C-SVM: one binary model per class pair, each trained with SMO
//! using second-order working-set selection.
//!
//! Model file layout, every field a little-endian f64 after an 8-byte magic
//! `DASCSVM1`:
//!
//! ```text
//! kernel (0 = rbf, 1 = linear), c, gamma, dim, converged (0/1),
//! n_classes, class codes (index into TH, WD, JH, SH, EN),
//! n_pairs, then per pair:
//!     positive class code, negative class code, rho, n_sv,
//!     n_sv dual coefficients (alpha_i * y_i), n_sv * dim support vectors
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fsutil::write_atomic;
use crate::label::ClassLabel;
use crate::sensing::dot;

const MAGIC: &[u8; 8] = b"DASCSVM1";
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub c: f64,
    /// RBF width; `None` means `1 / (dim * variance of the training features)`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel: KernelKind::Rbf,
            c: 10.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Kernel {
    kind: KernelKind,
    gamma: f64,
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }

    /// Full kernel matrix of `rows` (n x dim, row-major).
    fn matrix(&self, rows: &[f64], n: usize, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; n * n];
        // SAFETY: `rows` holds n*dim values and `g` n*n, matching the strides.
        unsafe {
            matrixmultiply::dgemm(
                n, dim, n, 1.0,
                rows.as_ptr(), dim as isize, 1,
                rows.as_ptr(), 1, dim as isize,
                0.0, g.as_mut_ptr(), n as isize, 1,
            );
        }
        if self.kind == KernelKind::Rbf {
            let sq: Vec<f64> = (0..n).map(|i| g[i * n + i]).collect();
            for i in 0..n {
                for j in 0..n {
                    let d2 = (sq[i] + sq[j] - 2.0 * g[i * n + j]).max(0.0);
                    g[i * n + j] = (-self.gamma * d2).exp();
                }
            }
        }
        g
    }
}

struct BinarySolution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
}

/// Dual C-SVC on a precomputed kernel matrix, labels `y` in {+1, -1}.
fn smo(k: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinarySolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let free = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if free && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let free = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !free {
                continue;
            }
            let v = y[t] * grad[t];
            gmax2 = gmax2.max(v);
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel.filter(|_| gmax + gmax2 >= tol) else {
            converged = true;
            break;
        };

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };
    BinarySolution { alpha, rho, converged }
}

#[derive(Debug, Clone, PartialEq)]
struct PairModel {
    positive: usize,
    negative: usize,
    rho: f64,
    coef: Vec<f64>,
    support: Vec<f64>,
}

impl PairModel {
    fn decision(&self, kernel: &Kernel, dim: usize, x: &[f64]) -> f64 {
        self.coef
            .iter()
            .zip(self.support.chunks_exact(dim))
            .map(|(a, sv)| a * kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    c: f64,
    dim: usize,
    classes: Vec<ClassLabel>,
    pairs: Vec<PairModel>,
    converged: bool,
}

fn auto_gamma(rows: &[&[f64]], dim: usize) -> f64 {
    let count = (rows.len() * dim) as f64;
    let mean = rows.iter().flat_map(|r| r.iter()).sum::<f64>() / count;
    let var = rows.iter().flat_map(|r| r.iter()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

impl SvmModel {
    /// Train on feature rows with their labels.
    pub fn fit(rows: &[&[f64]], labels: &[ClassLabel], params: &SvmParams) -> Result<SvmModel> {
        if rows.len() != labels.len() {
            return param(format!("{} feature rows but {} labels", rows.len(), labels.len()));
        }
        let Some(first) = rows.first() else {
            return param("no training data");
        };
        let dim = first.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return param("training rows must share a non-zero length");
        }
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite training feature".into()));
        }
        if !(params.c > 0.0 && params.c.is_finite()) {
            return param(format!("C must be positive, got {}", params.c));
        }
        if !(params.tol > 0.0) || params.max_iter == 0 {
            return param("tol and max_iter must be positive");
        }
        let gamma = match params.gamma {
            Some(g) if g > 0.0 && g.is_finite() => g,
            Some(g) => return param(format!("gamma must be positive, got {g}")),
            None => auto_gamma(rows, dim),
        };
        let kernel = Kernel { kind: params.kernel, gamma };
        let mut classes: Vec<ClassLabel> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return param("training data holds a single class");
        }

        let mut pairs = Vec::new();
        let mut converged = true;
        for a in 0..classes.len() {
            for b in a + 1..classes.len() {
                let idx: Vec<usize> = (0..rows.len())
                    .filter(|&i| labels[i] == classes[a] || labels[i] == classes[b])
                    .collect();
                let n = idx.len();
                let flat: Vec<f64> = idx.iter().flat_map(|&i| rows[i].iter().copied()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == classes[a] { 1.0 } else { -1.0 }).collect();
                let k = kernel.matrix(&flat, n, dim);
                let sol = smo(&k, &y, params.c, params.tol, params.max_iter);
                converged &= sol.converged;
                let mut coef = Vec::new();
                let mut support = Vec::new();
                for t in 0..n {
                    if sol.alpha[t] > 0.0 {
                        coef.push(sol.alpha[t] * y[t]);
                        support.extend_from_slice(&flat[t * dim..(t + 1) * dim]);
                    }
                }
                pairs.push(PairModel {
                    positive: a,
                    negative: b,
                    rho: sol.rho,
                    coef,
                    support,
                });
            }
        }
        Ok(SvmModel {
            kernel,
            c: params.c,
            dim,
            classes,
            pairs,
            converged,
        })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.kernel.gamma
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// False when any pair stopped at `max_iter` before meeting `tol`.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn support_vector_count(&self) -> usize {
        self.pairs.iter().map(|p| p.coef.len()).sum()
    }

    /// Every dual coefficient `alpha_i * y_i`, pair by pair.
    pub fn dual_coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().flat_map(|p| p.coef.iter().copied())
    }

    /// Pairwise vote; ties go to the larger summed margin, then class order.
    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        if x.len() != self.dim {
            return param(format!("feature length {} does not match model dimension {}", x.len(), self.dim));
        }
        let mut votes = vec![0usize; self.classes.len()];
        let mut margin = vec![0.0; self.classes.len()];
        for p in &self.pairs {
            let d = p.decision(&self.kernel, self.dim, x);
            if d > 0.0 {
                votes[p.positive] += 1;
            } else {
                votes[p.negative] += 1;
            }
            margin[p.positive] += d;
            margin[p.negative] -= d;
        }
        let mut best = 0;
        for c in 1..self.classes.len() {
            if votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best]) {
                best = c;
            }
        }
        Ok(self.classes[best])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v: Vec<f64> = vec![
            match self.kernel.kind {
                KernelKind::Rbf => 0.0,
                KernelKind::Linear => 1.0,
            },
            self.c,
            self.kernel.gamma,
            self.dim as f64,
            if self.converged { 1.0 } else { 0.0 },
            self.classes.len() as f64,
        ];
        v.extend(self.classes.iter().map(|c| class_code(*c) as f64));
        v.push(self.pairs.len() as f64);
        for p in &self.pairs {
            v.extend([p.positive as f64, p.negative as f64, p.rho, p.coef.len() as f64]);
            v.extend_from_slice(&p.coef);
            v.extend_from_slice(&p.support);
        }
        let mut out = MAGIC.to_vec();
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SvmModel> {
        let bad = |what: &str| Error::Format(format!("svm model: {what}"));
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let body = &bytes[8..];
        if !body.len().is_multiple_of(8) {
            return Err(bad("length is not a whole number of f64 values"));
        }
        let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut it = vals.into_iter();
        let mut next = |what: &str| it.next().ok_or_else(|| bad(&format!("truncated at {what}")));
        let count = |x: f64, what: &str| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(bad(&format!("invalid {what} {x}")))
            }
        };
        let kind = match next("kernel")? {
            0.0 => KernelKind::Rbf,
            1.0 => KernelKind::Linear,
            k => return Err(bad(&format!("unknown kernel code {k}"))),
        };
        let c = next("c")?;
        let gamma = next("gamma")?;
        let dim = count(next("dim")?, "dim")?;
        let converged = next("converged flag")? != 0.0;
        let n_classes = count(next("class count")?, "class count")?;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let code = count(next("class code")?, "class code")?;
            classes.push(*ClassLabel::ALL.get(code).ok_or_else(|| bad(&format!("class code {code}")))?);
        }
        let n_pairs = count(next("pair count")?, "pair count")?;
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let positive = count(next("pair class")?, "pair class")?;
            let negative = count(next("pair class")?, "pair class")?;
            if positive >= n_classes || negative >= n_classes {
                return Err(bad("pair refers to an unknown class"));
            }
            let rho = next("rho")?;
            let n_sv = count(next("support count")?, "support count")?;
            let coef = (0..n_sv).map(|_| next("coefficients")).collect::<Result<Vec<_>>>()?;
            let support = (0..n_sv * dim).map(|_| next("support vectors")).collect::<Result<Vec<_>>>()?;
            pairs.push(PairModel { positive, negative, rho, coef, support });
        }
        if next("end").is_ok() {
            return Err(bad("trailing data"));
        }
        Ok(SvmModel {
            kernel: Kernel { kind, gamma },
            c,
            dim,
            classes,
            pairs,
            converged,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<SvmModel> {
        SvmModel::from_bytes(&std::fs::read(path)?)
    }
}

fn class_code(c: ClassLabel) -> usize {
    ClassLabel::ALL.iter().position(|x| *x == c).expect("label in ALL")
}
