//! Shared fixtures for the benchmark targets.

use prnu_core::denoise::DenoiseParams;
use prnu_core::fingerprint::{estimate_reference, ReferencePattern};
use prnu_core::image::Image;
use prnu_core::synth::{make_scene_bank, SyntheticSensor};

pub const DIMS: (usize, usize) = (120, 160);

/// A captured image at working resolution.
pub fn capture(seed: u64) -> Image {
    let sensor = sensor("bench", seed);
    let scene = make_scene_bank(1, DIMS, seed).pop().expect("one scene");
    sensor.capture(&scene, 0).expect("capture")
}

pub fn sensor(id: &str, seed: u64) -> SyntheticSensor {
    SyntheticSensor::new(id, DIMS.0, DIMS.1, 0.02, 2.0, seed).expect("sensor")
}

/// A reference pattern estimated from `n` training captures.
pub fn pattern(id: &str, seed: u64, n: usize) -> ReferencePattern {
    let sensor = sensor(id, seed);
    let scenes = make_scene_bank(n, DIMS, seed ^ 0x5eed);
    let train: Vec<Image> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| sensor.capture(s, i as u64).expect("capture"))
        .collect();
    estimate_reference(&train, &DenoiseParams::default(), id).expect("estimate")
}
