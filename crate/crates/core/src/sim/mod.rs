//! Synthetic aliased warehouse flights.
//!
//! Every flight loops through the first three aisles. Flights differ in
//! where along the loop they start, in direction, and in a per-lap jitter of
//! the corner waypoints. Flight 0 always starts at the origin facing +x, so
//! its dead-reckoning frame coincides with the world frame.

pub mod dataset;
pub mod odometry;
pub mod trajectory;
pub mod world;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{load_dataset, load_manifest, save_dataset, Dataset, DatasetManifest, Sequence, SequenceEntry, DATASET_VERSION};
pub use odometry::{corrupt_odometry, integrate, CorruptedOdometry, OdometryNoiseSpec};
pub use trajectory::{generate_trajectory, three_aisle_loop, MotionSpec, Trajectory};
pub use world::{render_observation, CameraSpec, WarehouseSpec};

use crate::domain::{FrameRecord, Observation, OdometryDelta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub warehouse: WarehouseSpec,
    pub camera: CameraSpec,
    pub motion: MotionSpec,
    pub odometry: OdometryNoiseSpec,
    pub flights: usize,
    pub frames_per_flight: usize,
    /// Corner waypoints move by up to this much (metres, per axis) each lap.
    pub waypoint_jitter: f64,
    /// Std of per-frame Gaussian sensor noise added before quantisation.
    pub pixel_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            warehouse: WarehouseSpec::default(),
            camera: CameraSpec::default(),
            motion: MotionSpec::default(),
            odometry: OdometryNoiseSpec::default(),
            flights: 7,
            frames_per_flight: 1070,
            waypoint_jitter: 0.3,
            pixel_noise: 0.02,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.warehouse.validate()?;
        self.camera.validate()?;
        self.motion.validate()?;
        self.odometry.validate()?;
        if self.warehouse.num_aisles < 3 {
            return Err(Error::Config("flights loop through three aisles; num_aisles must be at least 3".into()));
        }
        if self.flights == 0 || self.frames_per_flight == 0 {
            return Err(Error::Config("flights and frames_per_flight must be positive".into()));
        }
        let half_free = (self.warehouse.aisle_width.min(self.warehouse.corridor_width)) / 2.0;
        if !(self.waypoint_jitter >= 0.0 && self.waypoint_jitter < 0.8 * half_free) {
            return Err(Error::Config(format!(
                "waypoint_jitter must lie in [0, {:.3})",
                0.8 * half_free
            )));
        }
        if !(self.pixel_noise >= 0.0 && self.pixel_noise.is_finite()) {
            return Err(Error::Config("pixel_noise must be non-negative".into()));
        }
        Ok(())
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn flight_seed(seed: u64, flight: usize) -> u64 {
    mix(seed, flight as u64 + 1)
}

/// Waypoints for flight `index`: enough jittered laps of the three-aisle
/// loop to cover `frames_per_flight` frames.
pub fn flight_plan(cfg: &SimConfig, index: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut corners = three_aisle_loop(&cfg.warehouse);
    corners.pop();
    if index % 2 == 1 {
        corners.reverse();
    }
    let start = if index == 0 { 0 } else { (3 * index) % corners.len() };
    corners.rotate_left(start);
    let lap_len: f64 = corners
        .iter()
        .zip(corners.iter().cycle().skip(1))
        .map(|(a, b)| ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt())
        .sum();
    let laps = (cfg.frames_per_flight as f64 / (lap_len * cfg.motion.frames_per_meter)).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x706c_616e));
    let j = cfg.waypoint_jitter;
    let mut plan = vec![corners[0]];
    for lap in 0..laps {
        for (i, c) in corners.iter().cycle().skip(1).take(corners.len()).enumerate() {
            // first leg unjittered: every flight starts facing along the loop
            let (dx, dy) = if j > 0.0 && (lap, i) != (0, 0) {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            };
            plan.push((c.0 + dx, c.1 + dy));
        }
    }
    plan
}

fn noisy_frame(cfg: &SimConfig, pose: &crate::domain::Pose2D, seed: u64, t: usize) -> Result<Observation> {
    let clean = render_observation(pose, &cfg.warehouse, &cfg.camera)?;
    if cfg.pixel_noise == 0.0 {
        return Ok(clean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, t as u64));
    let n = Normal::new(0.0, cfg.pixel_noise).expect("validated std");
    let shape = clean.shape();
    let pixels = clean
        .into_pixels()
        .into_iter()
        .map(|v| world::quantize(v + n.sample(&mut rng)))
        .collect();
    Observation::new(shape, pixels)
}

pub fn generate_flight(cfg: &SimConfig, index: usize, seed: u64) -> Result<Sequence> {
    cfg.validate()?;
    let fseed = flight_seed(seed, index);
    let plan = flight_plan(cfg, index, fseed);
    let mut traj = generate_trajectory(&cfg.warehouse, &plan, &cfg.motion)?;
    let n = cfg.frames_per_flight;
    if traj.poses.len() < n {
        return Err(Error::Degenerate("flight plan too short"));
    }
    traj.poses.truncate(n);
    traj.actions.truncate(n);
    let truth: Vec<OdometryDelta> = std::iter::once(OdometryDelta::zero())
        .chain(traj.poses.windows(2).map(|w| OdometryDelta::between(&w[0], &w[1])))
        .collect();
    let odo = corrupt_odometry(&truth, &cfg.odometry, mix(fseed, 0x6f64_6f6d), &[])?;
    let observations = traj
        .poses
        .par_iter()
        .enumerate()
        .map(|(t, p)| noisy_frame(cfg, p, fseed, t))
        .collect::<Result<Vec<_>>>()?;
    let frames = observations
        .into_iter()
        .enumerate()
        .map(|(t, observation)| FrameRecord {
            t,
            observation,
            action: traj.actions[t].clone(),
            odometry: odo.deltas[t],
            ground_truth: Some(traj.poses[t]),
        })
        .collect();
    let name = format!("flight_{index:03}");
    Ok(Sequence {
        entry: SequenceEntry {
            path: name.clone(),
            name,
            frame_count: n,
            image_shape: cfg.camera.shape,
            action_dim: cfg.motion.action_dim,
            has_ground_truth: true,
            seed: Some(fseed),
            reset_frames: odo.resets.iter().enumerate().filter(|(_, r)| **r).map(|(t, _)| t).collect(),
        },
        frames,
    })
}

/// Generates `cfg.flights` flights. A pure function of `(cfg, seed)`.
pub fn generate_dataset(cfg: &SimConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let sequences = (0..cfg.flights)
        .into_par_iter()
        .map(|i| generate_flight(cfg, i, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: DatasetManifest {
            version: DATASET_VERSION,
            seed: Some(seed),
            sim: Some(cfg.clone()),
            sequences: sequences.iter().map(|s| s.entry.clone()).collect(),
        },
        sequences,
    })
}
