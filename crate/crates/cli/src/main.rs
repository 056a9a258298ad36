//! `dascs`: generate synthetic DAS data, run the two-stage pipeline in the
//! Nyquist and compressed domains, and benchmark compressed-domain features
//! against OMP reconstruction.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dascs::datagen::{save_dataset, ClipSource, DatasetSpec, SyntheticSource};
use dascs::features::Domain;
use dascs::pipeline::bench::{bench_csv, run_bench, run_sweep};
use dascs::pipeline::export::{self, parse_detections};
use dascs::pipeline::{build_report, stage_one, stage_two, Context, RunConfig};
use dascs::reconstruction::sweep_csv;
use dascs::sensing::MatrixKind;
use dascs::Error;

#[derive(Parser)]
#[command(name = "dascs", version, about = "Compressed-domain DAS vibration detection and classification")]
struct Cli {
    /// Run configuration (TOML). `dascs config` prints every key with its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Dataset directory written by `generate`; without it clips are synthesized.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Use the small smoke-test configuration as the base.
    #[arg(long)]
    smoke: bool,
    /// Measurement ratio M/N [default: 0.3]
    #[arg(long)]
    mr: Option<f64>,
    /// Observation matrix kind: gaussian, row_orthonormal_gaussian, identity
    #[arg(long)]
    matrix_kind: Option<MatrixKind>,
    /// Observation matrix seed [default: 1]
    #[arg(long)]
    matrix_seed: Option<u64>,
    /// Run seed for augmentation, EN fill and fold assignment [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        over: Overrides,
    },
    /// Synthesize a dataset and write it to disk.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// Clips per class [default: 40]
        #[arg(long)]
        clips_per_class: Option<usize>,
        /// Fiber channels per clip [default: 32]
        #[arg(long)]
        channels: Option<usize>,
        /// Dataset seed [default: 0]
        #[arg(long)]
        data_seed: Option<u64>,
    },
    /// Stage-I and Stage-II in both domains, with every output file.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Stage-I only: ROC curves, operating points and per-window decisions.
    Detect {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Stage-II from the detections written by `detect` or `pipeline`.
    Classify {
        #[arg(long)]
        out: PathBuf,
        /// Directory holding detections_<domain>.csv
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// OMP reconstruction quality and time over an MR x K grid.
    Sweep {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// Measurement ratios [default: 0.1,0.2,0.3,0.4]
        #[arg(long, value_delimiter = ',')]
        mr_grid: Option<Vec<f64>>,
        /// Sparsity levels [default: 6,12,24,48]
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
    },
    /// Time OMP-then-FBE against direct compressed-domain features.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// Sparsity levels for the OMP path [default: 24]
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Number of windows timed [default: 20]
        #[arg(long)]
        windows: Option<usize>,
    },
}

fn base_config(path: Option<&Path>, over: &Overrides) -> dascs::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None if over.smoke => RunConfig::smoke(),
        None => RunConfig::default(),
    };
    if let Some(d) = &over.dataset {
        cfg.dataset.path = Some(d.clone());
    }
    if let Some(mr) = over.mr {
        cfg.matrix.mr = mr;
    }
    if let Some(k) = over.matrix_kind {
        cfg.matrix.kind = k;
    }
    if let Some(s) = over.matrix_seed {
        cfg.matrix.seed = s;
    }
    if let Some(s) = over.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> dascs::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    dascs::write_atomic(path, text.as_bytes())
}

fn execute(cli: Cli) -> dascs::Result<()> {
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Config { over } => {
            print!("{}", base_config(cfg_path, &over)?.to_toml());
        }
        Command::Generate { out, over, clips_per_class, channels, data_seed } => {
            let cfg = base_config(cfg_path, &over)?;
            let spec = DatasetSpec {
                clips_per_class: clips_per_class.unwrap_or(cfg.dataset.spec.clips_per_class),
                n_channels: channels.unwrap_or(cfg.dataset.spec.n_channels),
                seed: data_seed.unwrap_or(cfg.dataset.spec.seed),
                ..cfg.dataset.spec
            };
            let source = SyntheticSource::new(spec)?;
            save_dataset(&source, &out)?;
            eprintln!("wrote {} clips to {}", source.entries().len(), out.display());
        }
        Command::Pipeline { out, over } => {
            let cfg = base_config(cfg_path, &over)?;
            let (_, outcome) = dascs::pipeline::run_to_dir(cfg, &out)?;
            print!("{}", export::report_text(&outcome.report));
        }
        Command::Detect { out, over } => {
            let ctx = Context::new(base_config(cfg_path, &over)?)?;
            let det = stage_one(&ctx)?;
            export::write_stage_one(&ctx, &det, &out)?;
            print!("{}", export::report_text(&build_report(&ctx, &det, &[])));
        }
        Command::Classify { out, detections, over } => {
            let ctx = Context::new(base_config(cfg_path, &over)?)?;
            let mut inputs = Vec::new();
            for d in Domain::BOTH {
                let path = detections.join(export::detections_file(d));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::from(e).context(&path.display().to_string()))?;
                let windows = parse_detections(&text).map_err(|e| e.context(&path.display().to_string()))?;
                if windows.iter().any(|w| w.clip_index >= ctx.source.len()) {
                    return Err(Error::Format(format!("{} refers to clips outside the dataset", path.display())));
                }
                inputs.push((d, windows));
            }
            let results = stage_two(&ctx, &inputs)?;
            export::write_stage_two(&ctx, &results, &out)?;
            for r in &results {
                println!(
                    "{}: accuracy {:.4}, 4-class {:.4}",
                    r.domain.as_str(),
                    r.stacked.accuracy,
                    r.four_class_accuracy
                );
            }
        }
        Command::Sweep { out, over, mr_grid, k_grid } => {
            let mut cfg = base_config(cfg_path, &over)?;
            if let Some(g) = mr_grid {
                cfg.sweep.mr_grid = g;
            }
            if let Some(g) = k_grid {
                cfg.sweep.k_grid = g;
            }
            let ctx = Context::new(cfg)?;
            let csv = sweep_csv(&run_sweep(&ctx)?);
            write(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Bench { out, over, k, windows } => {
            let mut cfg = base_config(cfg_path, &over)?;
            if let Some(k) = k {
                cfg.bench.k_values = k;
            }
            if let Some(w) = windows {
                cfg.bench.windows = w;
            }
            cfg.validate()?;
            let ctx = Context::new(cfg)?;
            let csv = bench_csv(&run_bench(&ctx)?);
            write(&out.join("bench.csv"), &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 1,
        Error::Format(_) | Error::Io(_) => 2,
        Error::Numerical(_) | Error::Degenerate(_) | Error::Construction(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
