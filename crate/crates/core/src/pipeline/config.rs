use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classification::{SvmParams, DEFAULT_FOLDS};
use crate::datagen::DatasetSpec;
use crate::detection::{ThresholdMode, DEFAULT_FRACTION};
use crate::error::{param, Error, Result};
use crate::features::DEFAULT_WINDOW_S;
use crate::filterbank::{DEFAULT_BANDS, DEFAULT_BAND_WIDTH_HZ, DEFAULT_TAPS};
use crate::label::ClassLabel;
use crate::sensing::MatrixKind;

/// Everything a run depends on. Serialized in full into the run manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random choice the pipeline makes after data generation.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub matrix: MatrixConfig,
    pub bank: BankConfig,
    pub detection: DetectionConfig,
    pub classification: ClassificationConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
}

/// Either a dataset directory or a spec to synthesize from. A path wins
/// when both are given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub spec: DatasetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub mr: f64,
    pub seed: u64,
    pub kind: MatrixKind,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            mr: 0.3,
            seed: 1,
            kind: MatrixKind::RowOrthonormalGaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub n_bands: usize,
    pub band_width_hz: f64,
    pub taps: usize,
    pub window_s: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            n_bands: DEFAULT_BANDS,
            band_width_hz: DEFAULT_BAND_WIDTH_HZ,
            taps: DEFAULT_TAPS,
            window_s: DEFAULT_WINDOW_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub fraction: f64,
    /// Sorted multiplier grid; empty means 0.5 to 10 in steps of 0.05.
    pub multipliers: Vec<f64>,
    pub mode: ThresholdMode,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            fraction: DEFAULT_FRACTION,
            multipliers: Vec::new(),
            mode: ThresholdMode::PerBand,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    pub svm: SvmParams,
    pub folds: usize,
    pub augment_copies: usize,
    /// Below this many Stage-I false alarms, quiet windows top up the EN class.
    pub min_en_samples: usize,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        ClassificationConfig {
            svm: SvmParams::default(),
            folds: DEFAULT_FOLDS,
            augment_copies: 9,
            min_en_samples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mr_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    /// The first clip of this class supplies the swept window (its vibration channel).
    pub label: ClassLabel,
    pub window: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mr_grid: vec![0.1, 0.2, 0.3, 0.4],
            k_grid: vec![6, 12, 24, 48],
            label: ClassLabel::WD,
            window: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub k_values: Vec<usize>,
    pub windows: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k_values: vec![24],
            windows: 20,
        }
    }
}

impl RunConfig {
    /// Small configuration that runs end to end in seconds.
    pub fn smoke() -> Self {
        let mut c = RunConfig::default();
        c.dataset.spec = DatasetSpec::smoke();
        c.classification.folds = 2;
        c.classification.augment_copies = 2;
        c.classification.min_en_samples = 4;
        c.bench.windows = 2;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| e.into()).map_err(|e: Error| e.context(&path.display().to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn multipliers(&self) -> Vec<f64> {
        if self.detection.multipliers.is_empty() {
            crate::detection::default_multiplier_grid()
        } else {
            self.detection.multipliers.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.path.is_none() {
            self.dataset.spec.validate()?;
        }
        if !(self.matrix.mr > 0.0 && self.matrix.mr <= 1.0) {
            return param(format!("matrix.mr must lie in (0, 1], got {}", self.matrix.mr));
        }
        if self.matrix.kind == MatrixKind::Identity && self.matrix.mr != 1.0 {
            return param("identity matrix requires mr = 1");
        }
        if self.bank.window_s <= 0.0 || self.bank.n_bands == 0 || self.bank.taps == 0 {
            return param("bank window, band count and taps must be positive");
        }
        if !(self.detection.fraction > 0.0 && self.detection.fraction <= 1.0) {
            return param("detection.fraction must lie in (0, 1]");
        }
        if self.detection.multipliers.windows(2).any(|w| w[1] <= w[0])
            || self.detection.multipliers.iter().any(|m| !(*m > 0.0))
        {
            return param("detection.multipliers must be positive and strictly ascending");
        }
        if self.classification.folds < 2 {
            return param("classification.folds must be at least 2");
        }
        if self.bench.windows == 0 || self.bench.k_values.is_empty() {
            return param("bench needs at least one window and one k");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::smoke();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_toml("seed = 4\n[matrix]\nmr = 0.5\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.matrix.mr, 0.5);
        assert_eq!(c.matrix.kind, MatrixKind::RowOrthonormalGaussian);
        assert_eq!(c.classification.folds, 5);
        assert_eq!(c.multipliers().len(), 191);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[matrix]\nmr = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[detection]\nmultipliers = [2.0, 1.0]\n").is_err());
        assert!(RunConfig::from_toml("unknown = 1\n").is_err());
        assert!(RunConfig::from_toml("[matrix]\nkind = \"identity\"\nmr = 0.5\n").is_err());
    }
}
