mod common;

use nelloc::bpd;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn color_fixture_samples_are_deterministic_and_plausible() {
    let model = common::local_rgb();
    let a = model.sample(100, 100, 7).unwrap();
    assert_eq!((a.height(), a.width(), a.channels()), (100, 100, 3));
    assert_eq!(model.sample(100, 100, 7).unwrap(), a);
    assert_ne!(model.sample(100, 100, 8).unwrap(), a);
    // Samples are typical under the model that drew them, and cheaper than noise.
    let own = bpd(&a, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = bpd(&common::noise(&mut rng, 100, 100, 3), &model).unwrap();
    assert!(own < 7.0 && own < noise, "sample {own}, noise {noise}");
}

#[test]
fn full_fixture_samples() {
    let model = common::full_gray();
    let a = model.sample(8, 8, 3).unwrap();
    assert_eq!(model.sample(8, 8, 3).unwrap(), a);
    assert!(bpd(&a, &model).unwrap() < 7.0);
}
