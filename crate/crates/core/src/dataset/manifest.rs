//! JSON Lines manifests and the `dataset.json` header.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PatchSample, SourceId, SplitSlides};
use crate::optics::{OpticsConfig, StackPreset};
use crate::{Error, Image, Result};

pub const DATASET_HEADER: &str = "dataset.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn manifest_file(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?} (expected train, val or test)")))
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the tile PNG relative to the dataset root.
    pub image_path: String,
    pub z_label_um: f64,
    pub slide_id: String,
    pub fov_id: usize,
    pub slice_idx: usize,
    pub tile_xy: (usize, usize),
}

impl ManifestEntry {
    pub fn for_sample(sample: &PatchSample) -> Self {
        let s = &sample.source;
        Self {
            image_path: patch_path(s),
            z_label_um: sample.z_label_um,
            slide_id: s.slide_id.clone(),
            fov_id: s.fov_id,
            slice_idx: s.slice_idx,
            tile_xy: s.tile_xy,
        }
    }

    pub fn source(&self) -> SourceId {
        SourceId {
            slide_id: self.slide_id.clone(),
            fov_id: self.fov_id,
            slice_idx: self.slice_idx,
            tile_xy: self.tile_xy,
        }
    }
}

/// Canonical relative location of a tile image.
pub(crate) fn patch_path(s: &SourceId) -> String {
    format!(
        "patches/{}/f{:02}_s{:03}_x{}_y{}.png",
        s.slide_id, s.fov_id, s.slice_idx, s.tile_xy.0, s.tile_xy.1
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub dof_um: f64,
    pub magnification_tag: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str, split: Split, dof_um: f64, magnification_tag: &str) -> Result<Self> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Config(format!("{split} manifest line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<ManifestEntry>>>()?;
        Ok(Self {
            split,
            dof_um,
            magnification_tag: magnification_tag.to_string(),
            entries,
        })
    }

    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        std::fs::write(root.as_ref().join(self.split.manifest_file()), self.to_jsonl())?;
        Ok(())
    }
}

/// Contents of `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub dof_um: f64,
    pub tile_size: usize,
    pub optics_hash: String,
    pub optics: OpticsConfig,
    pub stack: StackPreset,
    pub magnification_tag: String,
    pub split_seed: u64,
    pub slides: SplitSlides,
    pub patch_counts: PatchCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl DatasetHeader {
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(root.as_ref().join(DATASET_HEADER), text)?;
        Ok(())
    }
}

/// Reads the header and all three manifests of a dataset root.
pub fn open_dataset(root: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<DatasetManifest>)> {
    let root = root.as_ref();
    let header_path = root.join(DATASET_HEADER);
    let text = std::fs::read_to_string(&header_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", header_path.display())))?;
    let header: DatasetHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed {}: {e}", header_path.display())))?;
    let manifests = Split::ALL
        .iter()
        .map(|&split| {
            let p = root.join(split.manifest_file());
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            DatasetManifest::parse_jsonl(&text, split, header.dof_um, &header.magnification_tag)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, manifests))
}

/// Loads the tile images of a manifest into memory.
pub fn load_samples(root: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<Vec<PatchSample>> {
    let root = root.as_ref();
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(PatchSample {
                image: Image::load_png(root.join(&e.image_path))?,
                z_label_um: e.z_label_um,
                source: e.source(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let m = DatasetManifest {
            split: Split::Val,
            dof_um: 4.0,
            magnification_tag: "sim".into(),
            entries: vec![
                ManifestEntry {
                    image_path: "patches/a/f00_s000_x0_y0.png".into(),
                    z_label_um: -19.837_261_1,
                    slide_id: "a".into(),
                    fov_id: 0,
                    slice_idx: 0,
                    tile_xy: (0, 0),
                },
                ManifestEntry {
                    image_path: "patches/a/f01_s020_x224_y0.png".into(),
                    z_label_um: 0.1 + 0.2,
                    slide_id: "a".into(),
                    fov_id: 1,
                    slice_idx: 20,
                    tile_xy: (224, 0),
                },
            ],
        };
        let text = m.to_jsonl();
        assert!(text.starts_with("{\"image_path\":"));
        let back = DatasetManifest::parse_jsonl(&text, Split::Val, 4.0, "sim").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = DatasetManifest::parse_jsonl("{\"x\":1}\n", Split::Train, 1.0, "").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
