use std::fs;
use std::time::Instant;

use dascs::datagen::{save_dataset, SyntheticSource};
use dascs::features::Domain;
use dascs::pipeline::export::{self, parse_detections};
use dascs::pipeline::{run, run_to_dir, stage_two, Context, RunConfig};

#[test]
fn smoke_run_reports_both_domains() {
    let t = Instant::now();
    let (_, out) = run(RunConfig::smoke()).unwrap();
    assert!(t.elapsed().as_secs() < 60);
    let r = &out.report;
    assert_eq!(r.reduction_ratio, 0.7);
    assert_eq!(r.clips, 10);
    assert_eq!(r.windows_per_domain, 10 * 8 * 3);
    let domains: Vec<Domain> = r.domains.iter().map(|d| d.domain).collect();
    assert_eq!(domains, vec![Domain::Nyquist, Domain::Compressed]);
    for d in &r.domains {
        assert!((0.0..=1.0).contains(&d.auc));
        let s2 = d.stage_two.as_ref().unwrap();
        let total: u64 = s2.confusion.iter().flatten().sum();
        assert_eq!(total as usize, s2.units);
        assert_eq!(s2.samples, s2.units * 3);
    }
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != export::TIMINGS_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to_dir(RunConfig::smoke(), a.path()).unwrap();
    run_to_dir(RunConfig::smoke(), b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for expected in ["roc_nyquist.csv", "roc_compressed.csv", "confusion_nyquist.csv", "features_compressed.csv", "report", "manifest"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert_eq!(fa, fb);
    assert!(a.path().join(export::TIMINGS_FILE).exists());
}

#[test]
fn disk_and_synthetic_sources_agree() {
    let cfg = RunConfig::smoke();
    let data = tempfile::tempdir().unwrap();
    save_dataset(&SyntheticSource::new(cfg.dataset.spec.clone()).unwrap(), data.path()).unwrap();
    let mut disk_cfg = cfg.clone();
    disk_cfg.dataset.path = Some(data.path().to_path_buf());
    let (_, a) = run(cfg).unwrap();
    let (_, b) = run(disk_cfg).unwrap();
    assert_eq!(a.report.domains, b.report.domains);
}

#[test]
fn detections_file_feeds_stage_two() {
    let dir = tempfile::tempdir().unwrap();
    let (ctx, out) = run_to_dir(RunConfig::smoke(), dir.path()).unwrap();
    let mut inputs = Vec::new();
    for d in Domain::BOTH {
        let text = fs::read_to_string(dir.path().join(export::detections_file(d))).unwrap();
        inputs.push((d, parse_detections(&text).unwrap()));
    }
    assert_eq!(inputs[0].1, out.detections[0].windows);
    let again = stage_two(&ctx, &inputs).unwrap();
    assert_eq!(again[1].stacked.confusion, out.classifications[1].stacked.confusion);
}

#[test]
fn missing_dataset_names_the_stage() {
    let mut cfg = RunConfig::smoke();
    cfg.dataset.path = Some("/nonexistent/dascs-data".into());
    let err = Context::new(cfg).err().unwrap().to_string();
    assert!(err.contains("dataset"), "{err}");
}
