//! Procedural dataset generation: phantom slides → focal stacks → tiles.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{patch_path, PatchCounts};
use super::{
    assign_splits, stack_samples, BuildOptions, DatasetHeader, DatasetManifest, ManifestEntry, Split, SplitSlides,
    DEFAULT_TILE_SIZE,
};
use crate::optics::{self, io, synthesize_stack, OpticsConfig, PhantomParams, Region, StackPreset, VirtualSlide};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_slides: usize,
    /// Slide size in pixels, `(width, height)`.
    pub slide_size: (usize, usize),
    pub tissue_fraction: f64,
    pub focal_amplitude_um: f64,
    pub fovs_per_slide: usize,
    /// Field-of-view size in pixels, `(width, height)`.
    pub fov_size: (usize, usize),
    pub stack: StackPreset,
    pub optics: OpticsConfig,
    pub tile_size: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub n_test_slides: Option<usize>,
    pub magnification_tag: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_slides: 12,
            slide_size: (768, 768),
            tissue_fraction: 0.55,
            focal_amplitude_um: 5.0,
            fovs_per_slide: 2,
            fov_size: (448, 448),
            stack: StackPreset::default(),
            optics: OpticsConfig::desk_training(),
            tile_size: DEFAULT_TILE_SIZE,
            seed: 0,
            split_seed: 0,
            n_test_slides: None,
            magnification_tag: "sim-20x".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        if self.n_slides < 3 {
            return Err(Error::Config(format!("n_slides must be at least 3, got {}", self.n_slides)));
        }
        if self.fovs_per_slide == 0 {
            return Err(Error::Config("fovs_per_slide must be positive".into()));
        }
        let (fw, fh) = self.fov_size;
        if fw < self.tile_size || fh < self.tile_size {
            return Err(Error::Config(format!(
                "field of view {fw}×{fh} is smaller than one {}-pixel tile",
                self.tile_size
            )));
        }
        if fw > self.slide_size.0 || fh > self.slide_size.1 {
            return Err(Error::Config("field of view exceeds the slide".into()));
        }
        Ok(())
    }

    pub fn slide_id(index: usize) -> String {
        format!("slide_{index:03}")
    }

    pub fn phantom(&self, index: usize) -> PhantomParams {
        PhantomParams {
            focal_amplitude_um: self.focal_amplitude_um,
            ..PhantomParams::new(seed::derive(self.seed, &[index as u64]), self.slide_size, self.tissue_fraction)
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            tile_size: self.tile_size,
            split_seed: self.split_seed,
            n_test_slides: self.n_test_slides,
            ..BuildOptions::default()
        }
    }
}

/// Chooses `n` non-overlapping fields of view, preferring tissue-rich ones.
pub fn pick_fovs(slide: &VirtualSlide, n: usize, size: (usize, usize), seed: u64) -> Result<Vec<Region>> {
    let (fw, fh) = size;
    if fw > slide.width() || fh > slide.height() {
        return Err(Error::Region(format!(
            "a {fw}×{fh} field does not fit a {}×{} slide",
            slide.width(),
            slide.height()
        )));
    }
    let mut rng = seed::rng(seed, &[0xf0f]);
    let mut candidates: Vec<(f64, Region)> = (0..64)
        .map(|_| {
            let x = rng.random_range(0..=slide.width() - fw) / 8 * 8;
            let y = rng.random_range(0..=slide.height() - fh) / 8 * 8;
            let r = Region::new(x, y, fw, fh);
            (slide.tissue_fraction_in(&r), r)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let overlaps = |a: &Region, b: &Region| {
        a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height && b.y < a.y + a.height
    };
    let mut picked: Vec<Region> = Vec::with_capacity(n);
    for (_, r) in &candidates {
        if picked.len() == n {
            break;
        }
        if picked.iter().all(|p| !overlaps(p, r)) {
            picked.push(*r);
        }
    }
    // Small slides may not hold n disjoint fields; fall back to overlapping ones.
    for (_, r) in &candidates {
        if picked.len() == n {
            break;
        }
        if !picked.contains(r) {
            picked.push(*r);
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub slides: SplitSlides,
    pub n_stacks: usize,
    pub tiles_per_image: usize,
    pub patch_counts: PatchCounts,
}

/// Generates slides, focal stacks and tiles under `root`:
///
/// ```text
/// root/dataset.json            header
/// root/{train,val,test}.jsonl  manifests
/// root/patches/<slide>/*.png   tiles
/// root/slides/<slide>.npy      focal surfaces (float32, [H, W])
/// root/stacks/<slide>_fNN.json stack sidecars
/// ```
pub fn generate_dataset(config: &SynthConfig, root: impl AsRef<Path>) -> Result<DatasetSummary> {
    config.validate()?;
    let root = root.as_ref();
    for sub in ["patches", "slides", "stacks"] {
        std::fs::create_dir_all(root.join(sub))?;
    }
    let mut entries = Vec::new();
    let mut ids = Vec::with_capacity(config.n_slides);
    let mut n_stacks = 0;
    let mut tiles_per_image = 0;
    for index in 0..config.n_slides {
        let id = SynthConfig::slide_id(index);
        let params = config.phantom(index);
        let slide = optics::generate_slide_with(&params)?;
        io::write_focal_surface(&slide.focal_surface, root.join("slides").join(format!("{id}.npy")))?;
        std::fs::create_dir_all(root.join("patches").join(&id))?;
        let fovs = pick_fovs(&slide, config.fovs_per_slide, config.fov_size, params.seed)?;
        for (fov_id, fov) in fovs.into_iter().enumerate() {
            let stack = synthesize_stack(&slide, fov, config.stack.n_slices, config.stack.z_range_um, &config.optics)?
                .with_ids(id.clone(), fov_id);
            io::write_sidecar(&stack.sidecar(), root.join("stacks").join(format!("{id}_f{fov_id:02}.json")))?;
            let samples = stack_samples(&stack, config.tile_size)?;
            tiles_per_image = samples.len() / stack.len();
            for s in &samples {
                s.image.save_png(root.join(patch_path(&s.source)))?;
                entries.push(ManifestEntry::for_sample(s));
            }
            n_stacks += 1;
        }
        ids.push(id);
    }
    let slides = assign_splits(&ids, &config.build_options())?;
    let mut counts = PatchCounts::default();
    for split in Split::ALL {
        let mut selected: Vec<ManifestEntry> = entries
            .iter()
            .filter(|e| slides.split_of(&e.slide_id) == Some(split))
            .cloned()
            .collect();
        selected.sort_by(|a, b| a.source().cmp(&b.source()));
        match split {
            Split::Train => counts.train = selected.len(),
            Split::Val => counts.val = selected.len(),
            Split::Test => counts.test = selected.len(),
        }
        DatasetManifest {
            split,
            dof_um: config.optics.dof_um,
            magnification_tag: config.magnification_tag.clone(),
            entries: selected,
        }
        .write(root)?;
    }
    DatasetHeader {
        format_version: 1,
        dof_um: config.optics.dof_um,
        tile_size: config.tile_size,
        optics_hash: config.optics.config_hash(),
        optics: config.optics,
        stack: config.stack,
        magnification_tag: config.magnification_tag.clone(),
        split_seed: config.split_seed,
        slides: slides.clone(),
        patch_counts: counts,
    }
    .write(root)?;
    Ok(DatasetSummary {
        root: root.to_path_buf(),
        slides,
        n_stacks,
        tiles_per_image,
        patch_counts: counts,
    })
}
