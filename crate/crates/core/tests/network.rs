//! Shape, determinism and numerical-hygiene properties of the focus network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specfocus::nn::{FeatureMap, FocusModel, ModelConfig, Variant, TILE_SIZE};
use specfocus::Image;

fn random_tile(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let data = (0..3 * size * size).map(|_| rng.random::<f32>()).collect();
    Image::from_vec(size, size, 3, data).unwrap()
}

#[test]
fn both_encoders_reduce_224_to_14() {
    for variant in Variant::ALL {
        let m = FocusModel::new(ModelConfig::new(variant, 32), 0).unwrap();
        let x = m.prepare(&Image::filled(TILE_SIZE, TILE_SIZE, 3, 0.5)).unwrap();
        let (_, cache) = m.forward_cached(&x);
        assert_eq!(cache.encoder_shapes(), [(256, 14, 14); 2], "{variant}");
    }
}

#[test]
fn encoder_maps_agree_for_any_valid_size() {
    for (h, w) in [(32, 32), (48, 64), (96, 32)] {
        let m = FocusModel::new(ModelConfig::new(Variant::Spatiospectral, 2).with_input_size(h, w), 1).unwrap();
        let (_, cache) = m.forward_cached(&FeatureMap::zeros(3, h, w));
        let [a, b] = cache.encoder_shapes();
        assert_eq!(a, b);
        assert_eq!((a.1, a.2), (h / 16, w / 16));
    }
}

#[test]
fn batch_of_eight_gives_eight_deterministic_finite_outputs() {
    let m = FocusModel::new(ModelConfig::new(Variant::Spatiospectral, 4), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tiles: Vec<Image> = (0..8).map(|_| random_tile(&mut rng, TILE_SIZE)).collect();
    let a = m.predict(&tiles).unwrap();
    assert_eq!(a.len(), 8);
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(a, m.predict(&tiles).unwrap());

    let zero = m.predict_one(&Image::new(TILE_SIZE, TILE_SIZE, 3)).unwrap();
    assert!(zero.is_finite());
}

#[test]
fn forward_and_backward_stay_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let models: Vec<FocusModel> = Variant::ALL
        .iter()
        .enumerate()
        .map(|(i, &v)| FocusModel::new(ModelConfig::new(v, 2).with_input_size(32, 32), i as u64).unwrap())
        .collect();
    for trial in 0..1000 {
        let m = &models[trial % models.len()];
        let x = m.prepare(&random_tile(&mut rng, 32)).unwrap();
        let (out, cache) = m.forward_cached(&x);
        assert!(out.is_finite(), "trial {trial}");
        let mut grads = m.params().zero_grads();
        m.backward(&cache, rng.random_range(-1.0..1.0), &mut grads);
        assert!(grads.is_finite(), "trial {trial}");
    }
}
