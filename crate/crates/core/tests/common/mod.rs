//! Fixture models and synthetic textures shared by the integration tests.
//!
//! The texture generators match `tools/train_fixtures.py` in distribution
//! (not in random stream): the fixture models were trained on `blocks_gray`
//! and `blocks_color`.

#![allow(dead_code)]

use std::path::PathBuf;

use nelloc::{ImageTensor, Model};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> Model {
    let bytes = std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("reading fixture {name}: {e}"));
    Model::from_bytes(&bytes).unwrap_or_else(|e| panic!("parsing fixture {name}: {e}"))
}

/// Local model, h=2, r=0, 32 hidden channels, 5 mixtures, grayscale.
pub fn local_gray() -> Model {
    load_fixture("local_gray.nlw")
}

/// Full model, h=2, r=3, 32 hidden channels, 5 mixtures, grayscale.
pub fn full_gray() -> Model {
    load_fixture("full_gray.nlw")
}

/// Local model, h=2, r=0, 32 hidden channels, 5 mixtures, RGB.
pub fn local_rgb() -> Model {
    load_fixture("local_rgb.nlw")
}

/// The local fixture for `channels`.
pub fn local_for(channels: usize) -> Model {
    match channels {
        1 => local_gray(),
        3 => local_rgb(),
        _ => panic!("no fixture with {channels} channels"),
    }
}

fn clamp(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Texture A: 4×4 blocks of a random level in `32..224`, plus uniform
/// per-pixel noise in `-6..=6`.
pub fn blocks_gray(rng: &mut ChaCha8Rng, height: usize, width: usize) -> ImageTensor {
    let levels: Vec<i32> = (0..height.div_ceil(4) * width.div_ceil(4)).map(|_| rng.gen_range(32..224)).collect();
    let mut values = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            let level = levels[(i / 4) * width.div_ceil(4) + j / 4];
            values.push(clamp(level + rng.gen_range(-6..=6)));
        }
    }
    ImageTensor::new(height, width, 1, values).unwrap()
}

/// Texture B: a random plane with gradients in `[-4, 4)` per pixel, plus
/// noise in `-1..=1`.
pub fn ramps_gray(rng: &mut ChaCha8Rng, height: usize, width: usize) -> ImageTensor {
    let a: f64 = rng.gen_range(64.0..192.0);
    let gx: f64 = rng.gen_range(-4.0..4.0);
    let gy: f64 = rng.gen_range(-4.0..4.0);
    let (ci, cj) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let mut values = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            let base = (a + gx * (j as f64 - cj) + gy * (i as f64 - ci)).round() as i32;
            values.push(clamp(base + rng.gen_range(-1..=1)));
        }
    }
    ImageTensor::new(height, width, 1, values).unwrap()
}

/// Color texture: 4×4 blocks of a random color, noise shared across the
/// channels in `-6..=6` plus per-channel noise in `-2..=2`.
pub fn blocks_color(rng: &mut ChaCha8Rng, height: usize, width: usize) -> ImageTensor {
    let blocks = height.div_ceil(4) * width.div_ceil(4);
    let levels: Vec<[i32; 3]> = (0..blocks)
        .map(|_| [rng.gen_range(32..224), rng.gen_range(32..224), rng.gen_range(32..224)])
        .collect();
    let mut values = Vec::with_capacity(height * width * 3);
    for i in 0..height {
        for j in 0..width {
            let level = levels[(i / 4) * width.div_ceil(4) + j / 4];
            let shared = rng.gen_range(-6..=6);
            for l in level {
                values.push(clamp(l + shared + rng.gen_range(-2..=2)));
            }
        }
    }
    ImageTensor::new(height, width, 3, values).unwrap()
}

/// The training texture for `channels`.
pub fn blocks(rng: &mut ChaCha8Rng, height: usize, width: usize, channels: usize) -> ImageTensor {
    match channels {
        1 => blocks_gray(rng, height, width),
        3 => blocks_color(rng, height, width),
        _ => panic!("no texture with {channels} channels"),
    }
}

/// Independent uniform pixels.
pub fn noise(rng: &mut ChaCha8Rng, height: usize, width: usize, channels: usize) -> ImageTensor {
    let values = (0..height * width * channels).map(|_| rng.gen()).collect();
    ImageTensor::new(height, width, channels, values).unwrap()
}
