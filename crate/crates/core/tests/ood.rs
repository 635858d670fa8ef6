mod common;

use nelloc::ood::{auroc, score};
use nelloc::{Error, Model, ModelSpec, WeightBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ratio_beats_raw_likelihood_on_textures() {
    let (full, local) = (common::full_gray(), common::local_gray());
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let a: Vec<_> = (0..40).map(|_| common::blocks_gray(&mut rng, 16, 16)).collect();
    let b: Vec<_> = (0..40).map(|_| common::ramps_gray(&mut rng, 16, 16)).collect();
    let scored = |set: &[nelloc::ImageTensor]| -> Vec<_> { set.iter().map(|x| score(x, &full, &local).unwrap()).collect() };
    let (sa, sb) = (scored(&a), scored(&b));
    let ratio = auroc(&sa.iter().map(|s| s.score).collect::<Vec<_>>(), &sb.iter().map(|s| s.score).collect::<Vec<_>>()).unwrap();
    let likelihood = auroc(&sa.iter().map(|s| s.log2_full).collect::<Vec<_>>(), &sb.iter().map(|s| s.log2_full).collect::<Vec<_>>()).unwrap();
    // The smooth ramps are easier to predict than the training texture.
    assert!(likelihood < 0.5, "likelihood {likelihood}");
    assert!(ratio > 0.9 && ratio >= likelihood, "ratio {ratio}");
}

#[test]
fn identical_models_give_no_signal() {
    let local = common::local_gray();
    let spec = ModelSpec::full(2, 0, 32, 5, 1);
    let full = Model::new(WeightBundle::new(spec, local.bundle().layers().to_vec()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let a: Vec<f64> = (0..10).map(|_| score(&common::blocks_gray(&mut rng, 12, 12), &full, &local).unwrap().score).collect();
    let b: Vec<f64> = (0..10).map(|_| score(&common::ramps_gray(&mut rng, 12, 12), &full, &local).unwrap().score).collect();
    assert!(a.iter().chain(&b).all(|&s| s == 0.0));
    assert_eq!(auroc(&a, &b).unwrap(), 0.5);
}

#[test]
fn scoring_checks_model_pairing() {
    let img = nelloc::ImageTensor::filled(4, 4, 3, 9).unwrap();
    assert!(matches!(score(&img, &common::full_gray(), &common::local_gray()), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(
        score(&img, &common::local_rgb(), &common::local_rgb()),
        Err(Error::UnsupportedVariant { .. })
    ));
}
