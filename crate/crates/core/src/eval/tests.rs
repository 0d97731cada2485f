use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

fn recs(pred: &[f64], truth: &[f64]) -> Vec<EvalRecord> {
    pred.iter().zip(truth).map(|(&p, &t)| EvalRecord::new(t, p)).collect()
}

fn tile(slide: &str, slice: usize, x: usize, truth: f64, pred: f64) -> EvalRecord {
    EvalRecord {
        true_z_um: truth,
        pred_z_um: pred,
        source: SourceId {
            slide_id: slide.into(),
            fov_id: 0,
            slice_idx: slice,
            tile_xy: (x, 0),
        },
        aggregated: false,
    }
}

#[test]
fn fe_examples() {
    assert_eq!(compute_fe(&recs(&[1.0, -4.0], &[1.0, -4.0])).unwrap(), (0.0, 0.0));
    assert_eq!(compute_fe(&recs(&[1.0, 3.0], &[0.0, 0.0])).unwrap(), (2.0, 1.0));
    assert!(matches!(compute_fe(&[]), Err(Error::Metric(_))));
}

#[test]
fn fd_examples() {
    assert_eq!(compute_fd(&recs(&[1.0, -2.0], &[2.0, 1.0])).unwrap(), 0.5);
    assert_eq!(compute_fd(&recs(&[3.0, -0.1], &[2.0, -7.0])).unwrap(), 0.0);
    // zero predictions have no direction
    assert_eq!(compute_fd(&recs(&[0.0, 0.0], &[2.0, -2.0])).unwrap(), 1.0);
    // at-plane records are excluded; if nothing is left the rate is undefined
    assert_eq!(compute_fd_with(&recs(&[-1.0, 5.0], &[0.5, 4.0]), 1.0).unwrap(), 0.0);
    assert!(matches!(
        compute_fd_with(&recs(&[1.0], &[0.5]), 1.0),
        Err(Error::UndefinedDirection { .. })
    ));
}

#[test]
fn dof_examples() {
    assert_eq!(compute_dof_rate(&recs(&[0.3, 0.7], &[0.0, 0.0]), 1.0).unwrap(), 0.5);
    assert_eq!(compute_dof_rate(&recs(&[2.0, -1.0], &[2.0, -1.0]), 4.0).unwrap(), 1.0);
    assert!(matches!(compute_dof_rate(&recs(&[0.0], &[0.0]), 0.0), Err(Error::Parameter(_))));
    assert!(matches!(compute_dof_rate(&[], 1.0), Err(Error::Metric(_))));
}

#[test]
fn bucket_examples() {
    let b = error_vs_distance_report(&recs(&[3.5], &[3.0]), 2.0).unwrap();
    let populated: Vec<_> = b.iter().filter(|b| b.count > 0).collect();
    assert_eq!(populated.len(), 1);
    assert_eq!((populated[0].lo_um, populated[0].hi_um), (2.0, 4.0));
    let oracle = recs(&[1.0, -5.0, 9.0], &[1.0, -5.0, 9.0]);
    assert!(error_vs_distance_report(&oracle, 2.0).unwrap().iter().all(|b| b.fe_mean_um == 0.0));
    let csv = buckets_to_csv(&b);
    assert!(csv.starts_with("bucket_lo_um,bucket_hi_um,fe_mean_um,fe_std_um,count\n"));
    assert_eq!(csv.lines().count(), b.len() + 1);
}

#[test]
fn buckets_conserve_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r: Vec<_> = (0..500)
        .map(|_| EvalRecord::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
        .collect();
    let b = error_vs_distance_report(&r, 1.5).unwrap();
    assert_eq!(b.iter().map(|b| b.count).sum::<usize>(), 500);
    let max = r.iter().map(|r| r.true_z_um.abs()).fold(0.0, f64::max);
    assert!(b.last().unwrap().hi_um > max && b[0].lo_um == 0.0);
}

#[test]
fn aggregation_groups_by_image() {
    let r = vec![
        tile("a", 0, 0, 2.0, 1.0),
        tile("a", 0, 224, 2.0, 9.0),
        tile("a", 0, 448, 2.0, 3.0),
        tile("a", 1, 0, -4.0, -4.5),
    ];
    let agg = aggregate_records(&r).unwrap();
    assert_eq!(agg.len(), 2);
    assert_eq!((agg[0].true_z_um, agg[0].pred_z_um), (2.0, 3.0));
    assert_eq!((agg[1].true_z_um, agg[1].pred_z_um), (-4.0, -4.5));
    assert!(agg.iter().all(|r| r.aggregated));
}

#[test]
fn oracle_and_constant_estimators() {
    let img = Image::new(8, 8, 3);
    let samples: Vec<PatchSample> = (0..6)
        .map(|i| PatchSample {
            image: img.clone(),
            z_label_um: if i % 2 == 0 { 4.0 } else { -4.0 } * (1 + i / 2) as f64,
            source: SourceId {
                slide_id: "s".into(),
                fov_id: 0,
                slice_idx: i,
                tile_xy: (0, 0),
            },
        })
        .collect();
    let opts = EvalOptions::default();
    let (oracle, _) = evaluate_samples(&GroundTruthOracle, &samples, &opts).unwrap();
    assert_eq!((oracle.fe_mean_um, oracle.fd_rate, oracle.dof_rate), (0.0, 0.0, 1.0));
    let (zero, _) = evaluate_samples(&ConstantEstimator(0.0), &samples, &opts).unwrap();
    let mean_abs = samples.iter().map(|s| s.z_label_um.abs()).sum::<f64>() / 6.0;
    assert!((zero.fe_mean_um - mean_abs).abs() < 1e-12);
    assert_eq!(zero.fd_rate, 1.0);
    assert!(GroundTruthOracle.estimate(&img, None).is_err());
}

#[test]
fn median_aggregation_reduces_error_under_symmetric_noise() {
    let mut wins = 0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut r = Vec::new();
        for slice in 0..30 {
            let truth = rng.random_range(-20.0..20.0);
            for t in 0..5 {
                r.push(tile("m", slice, t * 224, truth, truth + noise.sample(&mut rng)));
            }
        }
        let patch = compute_fe(&r).unwrap().0;
        let agg = compute_fe(&aggregate_records(&r).unwrap()).unwrap().0;
        if agg <= patch {
            wins += 1;
        }
    }
    assert!(wins >= 18, "{wins}/20");
}

fn record_set() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scale_equivariance(pairs in record_set(), c in 0.1f64..10.0) {
        let base: Vec<_> = pairs.iter().map(|&(t, p)| EvalRecord::new(t, p)).collect();
        let scaled: Vec<_> = pairs.iter().map(|&(t, p)| EvalRecord::new(c * t, c * p)).collect();
        let (m0, s0) = compute_fe(&base).unwrap();
        let (m1, s1) = compute_fe(&scaled).unwrap();
        prop_assert!((m1 - c * m0).abs() <= 1e-9 * (1.0 + m1.abs()));
        prop_assert!((s1 - c * s0).abs() <= 1e-9 * (1.0 + s1.abs()));
        let eps = 1e-9;
        if let Ok(fd0) = compute_fd_with(&base, eps) {
            prop_assert_eq!(fd0, compute_fd_with(&scaled, c * eps).unwrap());
        }
        let dof = 4.0;
        // compare on a grid that avoids records sitting exactly on the threshold
        let d0 = compute_dof_rate(&base, dof).unwrap();
        let d1 = compute_dof_rate(&scaled, c * dof).unwrap();
        let near = base.iter().any(|r| (r.abs_error() - dof / 2.0).abs() < 1e-9);
        if !near {
            prop_assert_eq!(d0, d1);
        }
        prop_assert!((0.0..=1.0).contains(&d0));
    }

    #[test]
    fn permutation_invariance(pairs in record_set(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let base: Vec<_> = pairs.iter().map(|&(t, p)| EvalRecord::new(t, p)).collect();
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (m0, s0) = compute_fe(&base).unwrap();
        let (m1, s1) = compute_fe(&shuffled).unwrap();
        prop_assert!((m0 - m1).abs() < 1e-9 && (s0 - s1).abs() < 1e-9);
        prop_assert_eq!(compute_fd(&base).ok(), compute_fd(&shuffled).ok());
        prop_assert_eq!(compute_dof_rate(&base, 2.0).unwrap(), compute_dof_rate(&shuffled, 2.0).unwrap());
        let b0 = error_vs_distance_report(&base, 3.0).unwrap();
        let b1 = error_vs_distance_report(&shuffled, 3.0).unwrap();
        prop_assert_eq!(b0.len(), b1.len());
        for (a, b) in b0.iter().zip(&b1) {
            prop_assert_eq!(a.count, b.count);
            prop_assert!((a.fe_mean_um - b.fe_mean_um).abs() < 1e-9);
        }
        if let Ok(fd) = compute_fd(&base) {
            prop_assert!((0.0..=1.0).contains(&fd));
        }
    }
}
