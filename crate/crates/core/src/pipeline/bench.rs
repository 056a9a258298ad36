//! Reconstruct-then-featurize versus direct compressed-domain features, and
//! the reconstruction sweep on a dataset window.

use std::fmt::Write as _;
use std::time::Instant;

use super::Context;
use crate::error::{param, Result, ResultExt};
use crate::features::{cfbe, fbe};
use crate::reconstruction::{omp_reconstruct, sweep_reconstruction_with, SweepRow};
use crate::sensing::{compress_batch, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mr: f64,
    pub k: usize,
    pub windows: usize,
    /// Mean seconds per window for OMP recovery plus Nyquist features.
    pub omp_fbe_s: f64,
    /// Mean seconds per window for direct compressed-domain features.
    pub cfbe_s: f64,
    pub speedup: f64,
    pub mean_pcc: f64,
}

/// Phase windows from the vibrating channels of event clips, in clip order.
pub fn vibration_windows(ctx: &Context, count: usize) -> Result<Vec<Trace>> {
    let mut out = Vec::with_capacity(count);
    for (i, e) in ctx.source.entries().iter().enumerate() {
        let Some(ch) = e.vibration_channel else { continue };
        let clip = ctx.source.clip(i)?;
        for w in 0..ctx.n_windows {
            if out.len() == count {
                return Ok(out);
            }
            out.push(clip.channels[ch].phase.window(w * ctx.window_len, ctx.window_len)?);
        }
    }
    if out.len() < count {
        return param(format!("dataset holds only {} vibration windows, {count} requested", out.len()));
    }
    Ok(out)
}

pub fn run_bench(ctx: &Context) -> Result<Vec<BenchRow>> {
    let cfg = &ctx.config.bench;
    let traces = vibration_windows(ctx, cfg.windows).stage("bench windows")?;
    let refs: Vec<&Trace> = traces.iter().collect();
    let compressed = compress_batch(&ctx.matrix, &refs).stage("bench compression")?;
    let n = traces.len() as f64;

    let t = Instant::now();
    for y in &compressed {
        std::hint::black_box(cfbe(y, &ctx.cbank)?);
    }
    let cfbe_s = t.elapsed().as_secs_f64() / n;

    let mut rows = Vec::new();
    for &k in &cfg.k_values {
        let mut pcc_sum = 0.0;
        let t = Instant::now();
        for (y, x) in compressed.iter().zip(&traces) {
            let r = omp_reconstruct(y, &ctx.matrix, k, Some(x)).stage(&format!("bench OMP k={k}"))?;
            std::hint::black_box(fbe(&r.reconstructed, &ctx.bank)?);
            pcc_sum += r.pcc.unwrap_or(f64::NAN);
        }
        let omp_fbe_s = t.elapsed().as_secs_f64() / n;
        rows.push(BenchRow {
            mr: ctx.matrix.mr(),
            k,
            windows: traces.len(),
            omp_fbe_s,
            cfbe_s,
            speedup: omp_fbe_s / cfbe_s,
            mean_pcc: pcc_sum / n,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("mr,k,windows,omp_fbe_s,cfbe_s,speedup,mean_pcc\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mr, r.k, r.windows, r.omp_fbe_s, r.cfbe_s, r.speedup, r.mean_pcc
        );
    }
    out
}

/// The configured sweep window: vibration channel of the first clip of the
/// configured class (channel 0 for quiet clips).
pub fn sweep_window(ctx: &Context) -> Result<Trace> {
    let cfg = &ctx.config.sweep;
    let Some(i) = ctx.source.entries().iter().position(|e| e.label == cfg.label) else {
        return param(format!("dataset has no {} clip to sweep", cfg.label));
    };
    if cfg.window >= ctx.n_windows {
        return param(format!("sweep window {} out of range ({} windows)", cfg.window, ctx.n_windows));
    }
    let clip = ctx.source.clip(i)?;
    let ch = clip.vibration_channel.unwrap_or(0);
    clip.channels[ch].phase.window(cfg.window * ctx.window_len, ctx.window_len)
}

pub fn run_sweep(ctx: &Context) -> Result<Vec<SweepRow>> {
    let cfg = &ctx.config.sweep;
    let trace = sweep_window(ctx).stage("sweep window")?;
    sweep_reconstruction_with(&trace, &cfg.mr_grid, &cfg.k_grid, ctx.config.matrix.seed, ctx.config.matrix.kind)
        .stage("sweep")
}
