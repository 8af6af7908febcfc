//! Latent state-space model trained by free-energy minimisation.

pub mod checkpoint;
pub mod gradcheck;
mod layers;
pub mod model;
pub mod objective;
pub mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{Architecture, GaussianLatent, LatentSample, ModelParams, STDDEV_FLOOR};
pub use objective::{
    episode_noise, free_energy, free_energy_terms, grad_free_energy, grad_weighted, kl_gaussian,
    reconstruction_loss, Episode, FreeEnergy, Gradient,
};
pub use train::{train, windows, write_log_csv, AdamState, EpochLog, TrainConfig, TrainOutcome, Trainer};

/// Softplus pre-activation giving stddev exactly `target` after the floor.
pub fn stddev_bias_for(target: f64) -> f64 {
    layers::softplus_inverse(target - STDDEV_FLOOR)
}
