#![allow(dead_code)]

pub mod can_oracle;
pub mod reference;

use latentslam_core::domain::{Action, FrameRecord, ImageShape, Observation, OdometryDelta};
use latentslam_core::latent::{Architecture, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// D=2, 4×4×1 observations, one conv layer, hidden 4, one action input.
pub fn tiny_arch() -> Architecture {
    Architecture::new(2, 1, ImageShape::new(4, 4, 1), vec![2], 4).unwrap()
}

/// Initialised model with every parameter perturbed so biases are non-zero.
pub fn random_params(arch: Architecture, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD_BEEF);
    for v in p.values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}

pub fn random_frames(shape: ImageShape, action_dim: usize, len: usize, seed: u64) -> Vec<FrameRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| FrameRecord {
            t,
            observation: Observation::new(shape, (0..shape.len()).map(|_| rng.random()).collect())
                .unwrap(),
            action: Action::new((0..action_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap(),
            odometry: OdometryDelta::zero(),
            ground_truth: None,
        })
        .collect()
}
