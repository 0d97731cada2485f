use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{tile_image, PatchSample, SourceId, Split, DEFAULT_TILE_SIZE};
use crate::optics::{FocalStack, Region};
use crate::{seed, Error, Result};

/// Controls tiling and the slide-level split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub tile_size: usize,
    pub split_seed: u64,
    /// Slides held out for testing; `None` holds out one in six (at least one).
    pub n_test_slides: Option<usize>,
    /// Fraction of the remaining slides used for validation.
    pub val_fraction: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            split_seed: 0,
            n_test_slides: None,
            val_fraction: 0.2,
        }
    }
}

/// Slide ids of each split, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSlides {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSlides {
    pub fn split_of(&self, slide_id: &str) -> Option<Split> {
        let has = |v: &Vec<String>| v.iter().any(|s| s == slide_id);
        if has(&self.train) {
            Some(Split::Train)
        } else if has(&self.val) {
            Some(Split::Val)
        } else if has(&self.test) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// Shuffles the distinct slide ids with `split_seed`, holds out the test
/// slides, then divides the rest `1 − val_fraction` / `val_fraction`.
pub fn assign_splits(slide_ids: &[String], options: &BuildOptions) -> Result<SplitSlides> {
    let distinct: BTreeSet<&String> = slide_ids.iter().collect();
    let n = distinct.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "a dataset needs at least 3 distinct slides to fill train, val and test; got {n}"
        )));
    }
    if !(options.val_fraction > 0.0 && options.val_fraction < 1.0) {
        return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
    }
    let n_test = options.n_test_slides.unwrap_or((n / 6).max(1));
    if n_test == 0 || n_test + 2 > n {
        return Err(Error::Config(format!(
            "cannot hold out {n_test} test slides from {n} and keep train and val non-empty"
        )));
    }
    let rest = n - n_test;
    let n_val = ((rest as f64 * options.val_fraction).round() as usize).clamp(1, rest - 1);
    let mut ids: Vec<String> = distinct.into_iter().cloned().collect();
    ids.shuffle(&mut seed::rng(options.split_seed, &[0x5b11]));
    let mut test = ids[..n_test].to_vec();
    let mut val = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    test.sort();
    val.sort();
    train.sort();
    Ok(SplitSlides { train, val, test })
}

/// Tiles every slice of a stack. Each tile is labelled with the signed
/// distance between the slice's stage position and the tile's own mean
/// optimal plane.
pub fn stack_samples(stack: &FocalStack, tile_size: usize) -> Result<Vec<PatchSample>> {
    let mut out = Vec::new();
    for (slice_idx, (img, dz)) in stack.images.iter().zip(&stack.z_offsets_um).enumerate() {
        let stage_z = stack.plane_um + dz;
        for tile in tile_image(img, tile_size, false)? {
            let r = Region::new(tile.x, tile.y, tile.image.width(), tile.image.height());
            let tile_plane = stack.focal_surface.mean_over(&r);
            out.push(PatchSample {
                image: tile.image,
                z_label_um: stage_z - tile_plane,
                source: SourceId {
                    slide_id: stack.slide_id.clone(),
                    fov_id: stack.fov_id,
                    slice_idx,
                    tile_xy: (tile.x, tile.y),
                },
            });
        }
    }
    Ok(out)
}

/// In-memory dataset: samples of each split, sorted by source id.
#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub slides: SplitSlides,
    pub train: Vec<PatchSample>,
    pub val: Vec<PatchSample>,
    pub test: Vec<PatchSample>,
}

impl BuiltDataset {
    pub fn split(&self, split: Split) -> &[PatchSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn build_dataset(stacks: &[FocalStack], options: &BuildOptions) -> Result<BuiltDataset> {
    let ids: Vec<String> = stacks.iter().map(|s| s.slide_id.clone()).collect();
    let slides = assign_splits(&ids, options)?;
    let mut built = BuiltDataset {
        slides,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for stack in stacks {
        let samples = stack_samples(stack, options.tile_size)?;
        let dst = match built.slides.split_of(&stack.slide_id).expect("every slide assigned") {
            Split::Train => &mut built.train,
            Split::Val => &mut built.val,
            Split::Test => &mut built.test,
        };
        dst.extend(samples);
    }
    for v in [&mut built.train, &mut built.val, &mut built.test] {
        v.sort_by(|a, b| a.source.cmp(&b.source));
    }
    Ok(built)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("slide_{i:03}")).collect()
    }

    #[test]
    fn split_sizes() {
        let opts = BuildOptions {
            n_test_slides: Some(2),
            ..BuildOptions::default()
        };
        let s = assign_splits(&ids(12), &opts).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 2, 2));
        let d = assign_splits(&ids(3), &BuildOptions::default()).unwrap();
        assert_eq!((d.train.len(), d.val.len(), d.test.len()), (1, 1, 1));
        assert!(matches!(assign_splits(&ids(2), &BuildOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn splits_are_disjoint_and_seeded() {
        let opts = BuildOptions::default();
        let a = assign_splits(&ids(20), &opts).unwrap();
        assert_eq!(a, assign_splits(&ids(20), &opts).unwrap());
        let all: BTreeSet<_> = a.train.iter().chain(&a.val).chain(&a.test).collect();
        assert_eq!(all.len(), 20);
        let other = assign_splits(&ids(20), &BuildOptions { split_seed: 9, ..opts }).unwrap();
        assert_ne!(a, other);
    }
}
