//! Noisy, reset-prone odometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{OdometryDelta, Pose2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryNoiseSpec {
    pub gaussian_std_xy: f64,
    pub gaussian_std_theta: f64,
    pub reset_probability: f64,
}

impl Default for OdometryNoiseSpec {
    fn default() -> Self {
        Self {
            gaussian_std_xy: 0.05,
            gaussian_std_theta: 0.01,
            reset_probability: 0.005,
        }
    }
}

impl OdometryNoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            gaussian_std_xy: 0.0,
            gaussian_std_theta: 0.0,
            reset_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.gaussian_std_xy) && ok(self.gaussian_std_theta)) {
            return Err(Error::Config("odometry noise std must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.reset_probability) {
            return Err(Error::Config("reset_probability must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedOdometry {
    pub deltas: Vec<OdometryDelta>,
    /// Frames at which the tracker "lost lock". Evaluation only.
    pub resets: Vec<bool>,
}

/// Adds Gaussian noise to every delta after the first. On a reset frame the
/// delta is replaced by one that moves the dead-reckoned position back to
/// the origin while keeping the dead-reckoned heading. `forced_resets` lists
/// extra frames that reset regardless of the draw.
pub fn corrupt_odometry(
    truth: &[OdometryDelta],
    noise: &OdometryNoiseSpec,
    seed: u64,
    forced_resets: &[usize],
) -> Result<CorruptedOdometry> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nxy = Normal::new(0.0, noise.gaussian_std_xy).expect("validated std");
    let nth = Normal::new(0.0, noise.gaussian_std_theta).expect("validated std");
    let mut dr = Pose2D::origin();
    let mut deltas = Vec::with_capacity(truth.len());
    let mut resets = Vec::with_capacity(truth.len());
    for (t, d) in truth.iter().enumerate() {
        d.validate()?;
        if t == 0 {
            deltas.push(*d);
            resets.push(false);
            dr = dr.compose(&d.as_transform());
            continue;
        }
        let noisy = OdometryDelta::new(
            d.dx + nxy.sample(&mut rng),
            d.dy + nxy.sample(&mut rng),
            d.dtheta + nth.sample(&mut rng),
        )?;
        let drawn = rng.random::<f64>() < noise.reset_probability;
        let reset = drawn || forced_resets.contains(&t);
        let out = if reset {
            let heading = dr.compose(&noisy.as_transform()).theta;
            OdometryDelta::between(&dr, &Pose2D::new(0.0, 0.0, heading))
        } else {
            noisy
        };
        dr = dr.compose(&out.as_transform());
        if reset {
            // land exactly on the origin despite rounding in `between`
            dr.x = 0.0;
            dr.y = 0.0;
        }
        deltas.push(out);
        resets.push(reset);
    }
    Ok(CorruptedOdometry { deltas, resets })
}

/// Dead-reckoned poses from integrating `deltas` from the origin.
pub fn integrate(deltas: &[OdometryDelta]) -> Vec<Pose2D> {
    let mut p = Pose2D::origin();
    deltas
        .iter()
        .map(|d| {
            p = p.compose(&d.as_transform());
            p
        })
        .collect()
}
