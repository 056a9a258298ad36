use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dascs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dascs")).args(args).output().expect("spawn dascs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dascs(&[])), 1);
    assert_eq!(code(&dascs(&["frobnicate"])), 1);
    assert_eq!(code(&dascs(&["config", "--mr", "0"])), 1);
    assert_eq!(code(&dascs(&["config", "--matrix-kind", "bogus"])), 1);
    assert_eq!(code(&dascs(&["--help"])), 0);
}

#[test]
fn config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let printed = dascs(&["config", "--smoke", "--mr", "0.2"]);
    assert_eq!(code(&printed), 0, "{}", stderr(&printed));
    let path = dir.path().join("run.toml");
    fs::write(&path, &printed.stdout).unwrap();
    let again = dascs(&["--config", s(&path), "config"]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(printed.stdout, again.stdout);
    assert!(String::from_utf8_lossy(&again.stdout).contains("mr = 0.2"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[matrix]\nmeasurement_ratio = 0.3\n").unwrap();
    let out = dascs(&["--config", s(&path), "config"]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("measurement_ratio"), "{}", stderr(&out));
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = dascs(&["generate", "--smoke", "--out", s(d)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    // manifest plus two arrays for each of 10 clips
    assert_eq!(names.len(), 21);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn pipeline_then_classify_from_detections() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let cls = dir.path().join("cls");
    assert_eq!(code(&dascs(&["generate", "--smoke", "--out", s(&data)])), 0);

    let out = dascs(&["pipeline", "--smoke", "--dataset", s(&data), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "report",
        "manifest",
        "timings",
        "roc_nyquist.csv",
        "roc_compressed.csv",
        "confusion_nyquist.csv",
        "confusion_compressed.csv",
        "detections_nyquist.csv",
        "features_compressed.csv",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let roc = fs::read_to_string(run.join("roc_nyquist.csv")).unwrap();
    assert_eq!(roc.lines().next(), Some("multiplier,tpr,fpr"));

    let out = dascs(&["classify", "--smoke", "--dataset", s(&data), "--detections", s(&run), "--out", s(&cls)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for d in ["nyquist", "compressed"] {
        let f = format!("confusion_{d}.csv");
        assert_eq!(fs::read(run.join(&f)).unwrap(), fs::read(cls.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("nowhere");
    let out = dascs(&["detect", "--smoke", "--dataset", s(&nowhere), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("manifest"), "{}", stderr(&out));

    let out = dascs(&["classify", "--smoke", "--detections", s(&nowhere), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("detections_nyquist.csv"), "{}", stderr(&out));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dascs(&["sweep", "--smoke", "--out", s(dir.path()), "--mr-grid", "0.05,0.1,0.2", "--k-grid", "2,4,8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "mr,k,pcc,wall_time_s,status");
    assert_eq!(lines.len(), 10);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")), "{csv}");
}

#[test]
fn bench_reports_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let out = dascs(&["bench", "--smoke", "--out", s(dir.path()), "--k", "4", "--windows", "1", "--mr", "0.1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[1], 4.0);
    assert!(row[5] > 1.0, "{csv}");
}
