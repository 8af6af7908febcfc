//! Latent-space SLAM.
//!
//! Camera frames are encoded by a recurrent variational state-space model into
//! compact latent codes. The codes act as view-cell templates for a pose-cell
//! continuous attractor network, and a topological experience map ties the
//! two together, detecting loop closures and relaxing accumulated drift.
//!
//! Modules:
//! - [`domain`]: poses, odometry, observations, actions, frame records
//! - [`latent`]: prior/posterior/likelihood networks, free energy, training
//! - [`pose_cells`]: the 3D (x, y, θ) attractor network
//! - [`view_cells`]: latent template store with cosine matching
//! - [`experience_map`]: topological graph, loop closure, relaxation, metrics
//! - [`pipeline`]: per-frame orchestration
//! - [`sim`]: synthetic aliased warehouse, odometry corruption, dataset files
//! - [`eval`]: place-recognition separation statistics

pub mod domain;
pub mod error;
pub mod eval;
pub mod experience_map;
pub mod io;
pub mod latent;
pub mod pipeline;
pub mod pose_cells;
pub mod sim;
pub mod view_cells;

pub use error::{Error, Result};
