//! Shared inputs for the criterion benches.

use spo2cam_core::frame::GrayImage;
use spo2cam_core::synth::{generate_m2_training_set, ChromophoreRanges, SkinOptics};
use spo2cam_core::tissue::M2Sample;
use spo2cam_core::vc2s::{blank_checker, ModelParams, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn params(seed: u64) -> ModelParams {
    ModelParams::init(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// A smooth ROI-shaped input with pixel values in [0, 1].
pub fn roi_sample(width: usize, height: usize) -> Sample {
    let roi = (0..3 * width * height)
        .map(|i| {
            let (c, p) = (i / (width * height), i % (width * height));
            0.4 + 0.1 * c as f64 + 0.05 * ((p % width) as f64 / width as f64)
        })
        .collect();
    Sample::new(roi, height, width, blank_checker()).expect("valid shape")
}

pub fn m2_samples(n: usize) -> Vec<M2Sample> {
    generate_m2_training_set(&SkinOptics::default(), &ChromophoreRanges::default(), n, 1)
}

/// A 20 Hz label trace over `seconds`.
pub fn label_trace(seconds: usize) -> Vec<f64> {
    (0..seconds * 20).map(|i| 92.0 + 5.0 * (i as f64 / 900.0).sin() + if i % 13 == 0 { 0.5 } else { 0.0 }).collect()
}

/// Textured frames translating by `step` pixels per frame.
pub fn moving_frames(count: usize, width: usize, height: usize, step: usize) -> Vec<GrayImage> {
    (0..count)
        .map(|f| {
            let data = (0..width * height)
                .map(|i| {
                    let (x, y) = ((i % width + width - (f * step) % width) as f64, (i / width) as f64);
                    (128.0 + 60.0 * (x * 0.3).sin() * (y * 0.25).cos()) as f32
                })
                .collect();
            GrayImage::new(width, height, data)
        })
        .collect()
}
