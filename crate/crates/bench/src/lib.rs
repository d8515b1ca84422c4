//! Shared fixtures for the criterion benchmarks.

use ir_core::degrade::{apply_recipe, Step};
use ir_core::harness::synth_image;
use ir_core::{DegradationRecipe, Image, NoiseSpec};

/// A synthetic scene and an AWGN-degraded copy of it.
pub fn noisy_pair(size: usize, sigma: f64, seed: u64) -> (Image, Image) {
    let clean = synth_image(size, seed);
    let recipe = DegradationRecipe::new(vec![Step::Noise(NoiseSpec::Awgn { sigma })], seed);
    let noisy = apply_recipe(&clean, &recipe).expect("synthetic scenes degrade");
    (clean, noisy)
}
