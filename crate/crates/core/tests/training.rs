//! Augmentation statistics and training-loop contracts on small phantoms.

use specfocus::dataset::{PatchSample, SourceId};
use specfocus::nn::{FocusModel, ModelConfig, NormalizationStats, Variant};
use specfocus::optics::{apply_defocus, generate_slide, OpticsConfig};
use specfocus::train::{
    augment, channel_stats, resolve_best_weights, smooth_l1, smooth_l1_grad, train, AugmentConfig, TrainConfig, Trainer,
};

const TILE: usize = 32;

/// `n` labelled 32×32 tiles cut from defocused renders of one phantom.
fn samples(n: usize, seed: u64) -> Vec<PatchSample> {
    let slide = generate_slide(seed, (256, 256), 0.8).unwrap().with_flat_surface(0.0);
    let optics = OpticsConfig::desk_training();
    let zs = [-8.0, -4.0, 4.0, 8.0];
    let renders: Vec<_> = zs.iter().map(|&z| apply_defocus(&slide, z, &optics).unwrap()).collect();
    (0..n)
        .map(|i| {
            let k = i % zs.len();
            let cell = i / zs.len();
            let (x, y) = ((cell % 8) * TILE, (cell / 8 % 8) * TILE);
            PatchSample {
                image: renders[k].crop(x, y, TILE, TILE).unwrap(),
                z_label_um: zs[k],
                source: SourceId {
                    slide_id: format!("s{seed}"),
                    fov_id: 0,
                    slice_idx: k,
                    tile_xy: (x, y),
                },
            }
        })
        .collect()
}

fn small_model(seed: u64) -> FocusModel {
    FocusModel::new(ModelConfig::new(Variant::Spatiospectral, 2).with_input_size(TILE, TILE), seed).unwrap()
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 3e-3,
        weight_decay: 0.0,
        label_scale_um: Some(8.0),
        augment: AugmentConfig::disabled(),
        ..TrainConfig::default()
    }
}

/// Per-channel mean and std of the network inputs over 1000 seeded draws.
fn input_stats(set: &[PatchSample], stats: &NormalizationStats, cfg: &AugmentConfig) -> [(f64, f64); 3] {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0.0;
    for seed in 0..1000u64 {
        let s = &set[seed as usize % set.len()];
        let a = augment(s, stats, cfg, seed);
        assert_eq!(a.z_label_um, s.z_label_um);
        assert!(a.input.is_finite());
        for c in 0..3 {
            for &v in a.input.channel(c) {
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += (TILE * TILE) as f64;
    }
    std::array::from_fn(|c| {
        let m = sum[c] / n;
        (m, (sq[c] / n - m * m).sqrt())
    })
}

#[test]
fn channel_normalization_standardizes_batches() {
    let set = samples(64, 2);
    let (mean, std) = channel_stats(&set);
    let stats = NormalizationStats {
        label_scale_um: 8.0,
        mean,
        std,
    };
    for (c, (m, sd)) in input_stats(&set, &stats, &AugmentConfig::disabled()).into_iter().enumerate() {
        assert!(m.abs() <= 0.1, "channel {c} mean {m}");
        assert!((0.9..=1.1).contains(&sd), "channel {c} std {sd}");
    }
    // The stochastic transforms after normalization (auto contrast in
    // particular) widen the distribution but keep it centred and bounded.
    for (c, (m, sd)) in input_stats(&set, &stats, &AugmentConfig::default()).into_iter().enumerate() {
        assert!(m.abs() <= 0.5, "augmented channel {c} mean {m}");
        assert!((0.75..=2.0).contains(&sd), "augmented channel {c} std {sd}");
    }
}

#[test]
fn augmentation_is_seeded() {
    let set = samples(4, 3);
    let stats = NormalizationStats {
        label_scale_um: 1.0,
        mean: [0.5; 3],
        std: [0.25; 3],
    };
    let cfg = AugmentConfig::default();
    let a = augment(&set[1], &stats, &cfg, 77);
    let b = augment(&set[1], &stats, &cfg, 77);
    assert_eq!(a.input.data, b.input.data);
}

#[test]
fn zero_epochs_returns_the_initial_weights() {
    let set = samples(16, 4);
    let init = small_model(5);
    let out = train(init.clone(), &set[..12], &set[12..], &quick_config(0)).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch(), 0);
    let before: Vec<_> = init.params().iter().map(|p| p.data.clone()).collect();
    let after: Vec<_> = out.best.model.params().iter().map(|p| p.data.clone()).collect();
    assert_eq!(before, after);
}

#[test]
fn same_seed_gives_the_same_history() {
    let set = samples(24, 6);
    let cfg = TrainConfig {
        augment: AugmentConfig::default(),
        ..quick_config(3)
    };
    let a = train(small_model(1), &set[..16], &set[16..], &cfg).unwrap();
    let b = train(small_model(1), &set[..16], &set[16..], &cfg).unwrap();
    assert_eq!(a.history, b.history);
    let best = a.history.iter().map(|r| r.val_fe_um).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best.val_fe_um, best);
    assert_eq!(a.history[a.best_epoch()].val_fe_um, best);
}

#[test]
fn two_hundred_patches_overfit() {
    let set = samples(200, 7);
    let out = train(small_model(2), &set, &set[..20], &quick_config(30)).unwrap();
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < 0.25 * first, "loss {first} -> {last}");
}

#[test]
fn small_subset_loss_falls_between_epoch_1_and_50() {
    let set = samples(32, 8);
    let out = train(small_model(3), &set, &set[..8], &quick_config(50)).unwrap();
    assert!(out.history[50].train_loss < out.history[1].train_loss);
    assert!(out.history.iter().all(|r| r.train_loss.is_finite() && r.val_fe_um.is_finite()));
}

#[test]
fn smooth_l1_gradient_matches_finite_differences() {
    let h = 1e-6;
    for beta in [0.1, 1.0, 2.5] {
        for i in -40..=40 {
            let d = i as f64 * 0.1 + 0.013;
            if (d.abs() - beta).abs() < 1e-3 {
                continue;
            }
            let num = (smooth_l1(d + h, 0.0, beta).unwrap() - smooth_l1(d - h, 0.0, beta).unwrap()) / (2.0 * h);
            let ana = smooth_l1_grad(d, 0.0, beta).unwrap();
            assert!((num - ana).abs() < 1e-6, "beta {beta} d {d}: {num} vs {ana}");
        }
    }
}

#[test]
fn best_weights_resolve_from_directory_pointer_or_file() {
    let set = samples(12, 9);
    let dir = tempfile::tempdir().unwrap();
    Trainer::new(quick_config(1))
        .out_dir(dir.path())
        .run(small_model(4), &set[..8], &set[8..])
        .unwrap();
    let best = dir.path().join("best.spfw");
    assert_eq!(resolve_best_weights(dir.path()).unwrap(), best);
    assert_eq!(resolve_best_weights(dir.path().join("checkpoint.json")).unwrap(), best);
    assert_eq!(resolve_best_weights(&best).unwrap(), best);
    assert!(resolve_best_weights(dir.path().join("history.csv")).is_err());
}
