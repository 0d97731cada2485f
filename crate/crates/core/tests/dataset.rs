//! Tiling, split hygiene, manifest round trips and median aggregation.

use std::collections::BTreeSet;

use proptest::prelude::*;

use specfocus::dataset::{
    aggregate_prediction, generate_dataset, load_samples, open_dataset, tile_image, SynthConfig,
};
use specfocus::optics::{OpticsConfig, StackPreset};
use specfocus::Image;

#[test]
fn tiling_examples() {
    let t = tile_image(&Image::new(448, 448, 3), 224, false).unwrap();
    let xy: Vec<_> = t.iter().map(|t| (t.x, t.y)).collect();
    assert_eq!(xy, vec![(0, 0), (224, 0), (0, 224), (224, 224)]);
    assert_eq!(tile_image(&Image::new(500, 500, 3), 224, false).unwrap().len(), 4);
    assert_eq!(tile_image(&Image::new(500, 500, 3), 224, true).unwrap().len(), 9);
    assert!(tile_image(&Image::new(200, 200, 3), 224, false).unwrap().is_empty());
}

fn tiny_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        n_slides: 5,
        slide_size: (256, 256),
        fovs_per_slide: 1,
        fov_size: (224, 224),
        stack: StackPreset {
            n_slices: 3,
            z_range_um: 4.0,
        },
        optics: OpticsConfig::desk_training(),
        seed,
        split_seed: seed,
        n_test_slides: Some(1),
        ..SynthConfig::default()
    }
}

#[test]
fn generated_dataset_keeps_slides_in_one_split_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let summary = generate_dataset(&tiny_synth(1), dir.path()).unwrap();
    assert_eq!(summary.slides.train.len() + summary.slides.val.len() + summary.slides.test.len(), 5);

    let (header, manifests) = open_dataset(dir.path()).unwrap();
    assert_eq!(header.slides, summary.slides);
    let mut seen_in: Vec<BTreeSet<String>> = Vec::new();
    for m in &manifests {
        // re-serializing the parsed manifest reproduces the file
        let on_disk = std::fs::read_to_string(dir.path().join(m.split.manifest_file())).unwrap();
        assert_eq!(m.to_jsonl(), on_disk);

        let samples = load_samples(dir.path(), m).unwrap();
        assert_eq!(samples.len(), m.len());
        for s in &samples {
            assert_eq!((s.image.width(), s.image.height()), (224, 224));
            assert!(s.z_label_um.abs() <= 4.0 + 5.0 * 2.0);
        }
        seen_in.push(samples.iter().map(|s| s.source.slide_id.clone()).collect());
    }
    for i in 0..seen_in.len() {
        for j in i + 1..seen_in.len() {
            assert!(seen_in[i].is_disjoint(&seen_in[j]));
        }
    }
}

#[test]
fn same_seed_same_manifests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&tiny_synth(3), a.path()).unwrap();
    generate_dataset(&tiny_synth(3), b.path()).unwrap();
    let (_, ma) = open_dataset(a.path()).unwrap();
    let (_, mb) = open_dataset(b.path()).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn median_examples() {
    assert_eq!(aggregate_prediction(&[1.0, 2.0, 100.0]).unwrap(), 2.0);
    assert_eq!(aggregate_prediction(&[1.0, 3.0]).unwrap(), 2.0);
    assert_eq!(aggregate_prediction(&[-4.5]).unwrap(), -4.5);
    assert!(aggregate_prediction(&[]).is_err());
}

proptest! {
    /// Replacing fewer than half of the values by outliers keeps the median
    /// inside the range of the untouched values.
    #[test]
    fn median_survives_a_minority_of_outliers(
        clean in prop::collection::vec(-20.0f64..20.0, 3..30),
        outliers in prop::collection::vec(prop::num::f64::NORMAL, 0..30),
    ) {
        let k = outliers.len().min((clean.len() - 1) / 2);
        let mut mixed = clean.clone();
        mixed[..k].copy_from_slice(&outliers[..k]);
        let kept = &clean[k..];
        let lo = kept.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = kept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let m = aggregate_prediction(&mixed).unwrap();
        prop_assert!(m >= lo && m <= hi, "{} not in [{}, {}]", m, lo, hi);
    }
}
