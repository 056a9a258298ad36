//! On-disk dataset layout.
//!
//! A dataset directory holds a TOML `manifest` (the generating spec plus a
//! clip table) and two raw arrays per clip, `<clip_id>.phase.f32` and
//! `<clip_id>.intensity.f32`: little-endian `f32`, channel-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChannelPair, ClipEntry, ClipSource, Dataset, DatasetSpec, LabeledClip};
use crate::error::{param, Error, Result};
use crate::fsutil::write_atomic;
use crate::sensing::{Modality, Trace};

pub const MANIFEST_FILE: &str = "manifest";
const FORMAT_TAG: &str = "dascs-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    spec: DatasetSpec,
    clips: Vec<ClipEntry>,
}

fn array_path(dir: &Path, clip_id: &str, modality: Modality) -> PathBuf {
    dir.join(format!("{clip_id}.{}.f32", modality.as_str()))
}

/// Write every clip of `source` and the manifest into `dir`.
///
/// Clips are fetched one at a time, so a synthetic source is never fully
/// materialized. The manifest is written last.
pub fn save_dataset<S: ClipSource + ?Sized>(source: &S, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, entry) in source.entries().iter().enumerate() {
        let clip = source.clip(i)?;
        if clip.channels.len() != entry.n_channels || clip.n_samples() != entry.n_samples {
            return Err(Error::Format(format!(
                "clip {} does not match its table entry",
                entry.clip_id
            )));
        }
        for modality in [Modality::Phase, Modality::Intensity] {
            let mut bytes = Vec::with_capacity(entry.n_channels * entry.n_samples * 4);
            for pair in &clip.channels {
                for v in pair.get(modality).samples() {
                    bytes.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
            write_atomic(&array_path(dir, &entry.clip_id, modality), &bytes)?;
        }
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        spec: source.spec().clone(),
        clips: source.entries().to_vec(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

/// A dataset directory whose clips are read on demand.
#[derive(Debug, Clone)]
pub struct DiskDataset {
    dir: PathBuf,
    spec: DatasetSpec,
    entries: Vec<ClipEntry>,
}

impl DiskDataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Format(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if manifest.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "manifest field `format` is {:?}, expected {FORMAT_TAG:?}",
                manifest.format
            )));
        }
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "manifest field `version` is {}, expected {FORMAT_VERSION}",
                manifest.version
            )));
        }
        manifest
            .spec
            .validate()
            .map_err(|e| Error::Format(format!("manifest field `spec`: {e}")))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            spec: manifest.spec,
            entries: manifest.clips,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read_modality(&self, entry: &ClipEntry, modality: Modality) -> Result<Vec<Trace>> {
        let path = array_path(&self.dir, &entry.clip_id, modality);
        let bytes = fs::read(&path).map_err(|e| {
            Error::Format(format!("clip {}: cannot read {}: {e}", entry.clip_id, path.display()))
        })?;
        let per_channel = entry.n_samples * 4;
        let expected = entry.n_channels * per_channel;
        if bytes.len() != expected {
            let msg = if per_channel > 0 && bytes.len() % per_channel == 0 {
                format!(
                    "clip {}: manifest declares {} channels, {} array has {}",
                    entry.clip_id,
                    entry.n_channels,
                    modality.as_str(),
                    bytes.len() / per_channel
                )
            } else {
                format!(
                    "clip {}: {} array is {} bytes, expected {expected}",
                    entry.clip_id,
                    modality.as_str(),
                    bytes.len()
                )
            };
            return Err(Error::Format(msg));
        }
        bytes
            .chunks(per_channel)
            .map(|chunk| {
                let samples = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect();
                Trace::new(samples, self.spec.sample_rate_hz, modality)
                    .map_err(|e| Error::Format(format!("clip {}: {e}", entry.clip_id)))
            })
            .collect()
    }
}

impl ClipSource for DiskDataset {
    fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    fn entries(&self) -> &[ClipEntry] {
        &self.entries
    }

    fn clip(&self, index: usize) -> Result<LabeledClip> {
        let Some(entry) = self.entries.get(index) else {
            return param(format!("no clip {index}"));
        };
        let phase = self.read_modality(entry, Modality::Phase)?;
        let intensity = self.read_modality(entry, Modality::Intensity)?;
        if let Some(v) = entry.vibration_channel.filter(|v| *v >= entry.n_channels) {
            return Err(Error::Format(format!(
                "clip {}: vibration channel {v} out of range",
                entry.clip_id
            )));
        }
        Ok(LabeledClip {
            clip_id: entry.clip_id.clone(),
            label: entry.label,
            channels: phase
                .into_iter()
                .zip(intensity)
                .map(|(phase, intensity)| ChannelPair { phase, intensity })
                .collect(),
            vibration_channel: entry.vibration_channel,
            duration_s: self.spec.duration_s,
            sample_rate_hz: self.spec.sample_rate_hz,
        })
    }
}

/// Read a whole dataset directory into memory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let disk = DiskDataset::open(dir)?;
    let clips = (0..disk.len()).map(|i| disk.clip(i)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: disk.spec,
        entries: disk.entries,
        clips,
    })
}
