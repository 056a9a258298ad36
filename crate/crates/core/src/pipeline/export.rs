//! Run outputs. Deterministic files (CSV tables, `report`, `manifest`) are
//! separated from wall-clock measurements (`timings`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Context, DomainClassification, RunOutcome, RunReport, WindowOutcome};
use crate::error::{Error, Result};
use crate::features::Domain;
use crate::fsutil::write_atomic;

pub const REPORT_FILE: &str = "report";
pub const MANIFEST_FILE: &str = "manifest";
pub const TIMINGS_FILE: &str = "timings";

pub fn roc_file(domain: Domain) -> String {
    format!("roc_{}.csv", domain.as_str())
}

pub fn confusion_file(domain: Domain) -> String {
    format!("confusion_{}.csv", domain.as_str())
}

pub fn features_file(domain: Domain) -> String {
    format!("features_{}.csv", domain.as_str())
}

pub fn detections_file(domain: Domain) -> String {
    format!("detections_{}.csv", domain.as_str())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    matrix_id: String,
    dataset_source: String,
    config: &'a super::RunConfig,
}

pub fn manifest_text(ctx: &Context) -> String {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        matrix_id: ctx.matrix.id().to_string(),
        dataset_source: match &ctx.config.dataset.path {
            Some(p) => p.display().to_string(),
            None => "synthetic".into(),
        },
        config: &ctx.config,
    };
    toml::to_string(&m).expect("manifest serializes")
}

pub fn report_text(report: &RunReport) -> String {
    toml::to_string(report).expect("report serializes")
}

pub fn detections_csv(ctx: &Context, windows: &[WindowOutcome]) -> String {
    let entries = ctx.source.entries();
    let mut out = String::from("clip_id,clip_index,channel,window,truth,is_vibration,fraction_above\n");
    for w in windows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            entries[w.clip_index].clip_id,
            w.clip_index,
            w.channel,
            w.window,
            u8::from(w.truth),
            u8::from(w.is_vibration),
            w.fraction_above
        );
    }
    out
}

/// Read a detections table written by [`detections_csv`].
pub fn parse_detections(text: &str) -> Result<Vec<WindowOutcome>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("detections file is empty".into()))?;
    if header != "clip_id,clip_index,channel,window,truth,is_vibration,fraction_above" {
        return Err(Error::Format(format!("unexpected detections header {header:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::Format(format!("detections line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
            let flag = |s: &str, what: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(what)),
            };
            Ok(WindowOutcome {
                clip_index: int(f[1], "clip_index")?,
                channel: int(f[2], "channel")?,
                window: int(f[3], "window")?,
                truth: flag(f[4], "truth")?,
                is_vibration: flag(f[5], "is_vibration")?,
                fraction_above: f[6].parse().map_err(|_| bad("fraction_above"))?,
            })
        })
        .collect()
}

/// Stage-II originals: provenance columns then the stacked feature values.
pub fn features_csv(c: &DomainClassification) -> String {
    let dim = c.samples.first().map_or(0, |s| s.feature.values.len());
    let mut out = String::from("clip_id,channel,window,label");
    for i in 0..dim {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for s in c.samples.iter().filter(|s| !s.feature.augmented) {
        let _ = write!(out, "{},{},{},{}", s.clip_id, s.key.channel, s.key.window, s.feature.label);
        for v in &s.feature.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn put(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes())?;
    written.push(path);
    Ok(())
}

/// Write every output of a finished run.
pub fn write_run(ctx: &Context, outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for d in &outcome.detections {
        put(dir, &roc_file(d.domain), &d.roc.to_csv(), &mut written)?;
        put(dir, &detections_file(d.domain), &detections_csv(ctx, &d.windows), &mut written)?;
    }
    for c in &outcome.classifications {
        put(dir, &confusion_file(c.domain), &c.stacked.confusion.to_csv(), &mut written)?;
        put(dir, &features_file(c.domain), &features_csv(c), &mut written)?;
    }
    put(dir, REPORT_FILE, &report_text(&outcome.report), &mut written)?;
    put(dir, MANIFEST_FILE, &manifest_text(ctx), &mut written)?;
    put(
        dir,
        TIMINGS_FILE,
        &toml::to_string(&outcome.timings).expect("timings serialize"),
        &mut written,
    )?;
    Ok(written)
}

#[derive(Serialize)]
struct StageTwoFile {
    domains: Vec<DomainStageTwo>,
}

#[derive(Serialize)]
struct DomainStageTwo {
    domain: Domain,
    #[serde(flatten)]
    report: super::StageTwoReport,
}

/// Outputs of a Stage-II run made from stored detections.
pub fn write_stage_two(ctx: &Context, classifications: &[DomainClassification], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for c in classifications {
        put(dir, &confusion_file(c.domain), &c.stacked.confusion.to_csv(), &mut written)?;
        put(dir, &features_file(c.domain), &features_csv(c), &mut written)?;
    }
    let file = StageTwoFile {
        domains: classifications
            .iter()
            .map(|c| DomainStageTwo { domain: c.domain, report: super::stage_two_report(c) })
            .collect(),
    };
    put(dir, REPORT_FILE, &toml::to_string(&file).expect("report serializes"), &mut written)?;
    put(dir, MANIFEST_FILE, &manifest_text(ctx), &mut written)?;
    Ok(written)
}

/// Outputs of a Stage-I-only run.
pub fn write_stage_one(ctx: &Context, detections: &[super::DomainDetection], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for d in detections {
        put(dir, &roc_file(d.domain), &d.roc.to_csv(), &mut written)?;
        put(dir, &detections_file(d.domain), &detections_csv(ctx, &d.windows), &mut written)?;
    }
    let report = super::build_report(ctx, detections, &[]);
    put(dir, REPORT_FILE, &report_text(&report), &mut written)?;
    put(dir, MANIFEST_FILE, &manifest_text(ctx), &mut written)?;
    Ok(written)
}
