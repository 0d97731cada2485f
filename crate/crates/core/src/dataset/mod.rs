//! Labeled patch datasets: tiling, slide-level splits, manifests and the
//! median aggregation used at inference time.

mod build;
mod manifest;
mod synth;

use serde::{Deserialize, Serialize};

use crate::{Error, Image, Result};

pub use build::{assign_splits, build_dataset, stack_samples, BuildOptions, BuiltDataset, SplitSlides};
pub use manifest::{
    load_samples, open_dataset, DatasetHeader, DatasetManifest, ManifestEntry, PatchCounts, Split, DATASET_HEADER,
};
pub use synth::{generate_dataset, pick_fovs, DatasetSummary, SynthConfig};

pub const DEFAULT_TILE_SIZE: usize = 224;
pub const MIN_TILE_SIZE: usize = 32;

/// Where a patch came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceId {
    pub slide_id: String,
    pub fov_id: usize,
    pub slice_idx: usize,
    /// Pixel offset `(x, y)` of the tile inside its field of view.
    pub tile_xy: (usize, usize),
}

impl SourceId {
    /// Identifier of the full image (all tiles of one slice of one field).
    pub fn image_key(&self) -> (String, usize, usize) {
        (self.slide_id.clone(), self.fov_id, self.slice_idx)
    }
}

/// One tile with its signed defocus label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub image: Image,
    /// Stage position minus the tile's optimal plane, µm (positive = above).
    pub z_label_um: f64,
    pub source: SourceId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub x: usize,
    pub y: usize,
    pub image: Image,
}

/// Cuts `image` into a non-overlapping grid anchored at the top-left corner,
/// row by row. Edge remainders become smaller tiles only with `keep_partial`.
pub fn tile_image(image: &Image, tile_size: usize, keep_partial: bool) -> Result<Vec<Tile>> {
    if tile_size < MIN_TILE_SIZE {
        return Err(Error::Parameter(format!(
            "tile_size must be at least {MIN_TILE_SIZE}, got {tile_size}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let mut tiles = Vec::new();
    for y in (0..h).step_by(tile_size) {
        for x in (0..w).step_by(tile_size) {
            let tw = tile_size.min(w - x);
            let th = tile_size.min(h - y);
            if (tw < tile_size || th < tile_size) && !keep_partial {
                continue;
            }
            tiles.push(Tile {
                x,
                y,
                image: image.crop(x, y, tw, th)?,
            });
        }
    }
    Ok(tiles)
}

/// Median of patch predictions; even counts average the middle pair.
pub fn aggregate_prediction(predictions: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Aggregation("cannot aggregate an empty prediction list".into()));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(Error::Aggregation("predictions must be finite".into()));
    }
    let mut v = predictions.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiling_grid() {
        let tiles = tile_image(&Image::new(448, 448, 3), 224, false).unwrap();
        let xy: Vec<_> = tiles.iter().map(|t| (t.x, t.y)).collect();
        assert_eq!(xy, vec![(0, 0), (224, 0), (0, 224), (224, 224)]);
        assert_eq!(tile_image(&Image::new(500, 500, 3), 224, false).unwrap().len(), 4);
        assert!(tile_image(&Image::new(200, 200, 3), 224, false).unwrap().is_empty());
        let partial = tile_image(&Image::new(500, 300, 3), 224, true).unwrap();
        assert_eq!(partial.len(), 6);
        assert_eq!((partial[5].image.width(), partial[5].image.height()), (52, 76));
        assert!(matches!(tile_image(&Image::new(64, 64, 3), 16, false), Err(Error::Parameter(_))));
    }

    #[test]
    fn median_examples() {
        assert_eq!(aggregate_prediction(&[1.0, 2.0, 100.0]).unwrap(), 2.0);
        assert_eq!(aggregate_prediction(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(aggregate_prediction(&[-7.5]).unwrap(), -7.5);
        assert!(matches!(aggregate_prediction(&[]), Err(Error::Aggregation(_))));
    }

    proptest! {
        #[test]
        fn median_is_robust_to_minority_outliers(
            clean in prop::collection::vec(-50.0f64..50.0, 3..20),
            outliers in prop::collection::vec(-1e6f64..1e6, 0..20),
        ) {
            let k = outliers.len().min((clean.len() - 1) / 2);
            let mut mixed = clean.clone();
            mixed[..k].copy_from_slice(&outliers[..k]);
            let untouched = &clean[k..];
            let lo = untouched.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = untouched.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = aggregate_prediction(&clean).unwrap();
            let b = aggregate_prediction(&mixed).unwrap();
            prop_assert!((a - b).abs() <= hi - lo + 1e-9);
        }
    }
}
