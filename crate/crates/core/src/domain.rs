//! Shared value types: planar poses, odometry increments, camera frames and
//! control vectors.
//!
//! Observations are stored row-major, channel-last (`H × W × C`) with values in
//! `[0, 1]`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π, π)`.
///
/// Values already inside the interval are returned untouched, which makes the
/// function exactly idempotent.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(theta))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let r = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to TAU for inputs just below a multiple of 2π
    if r >= PI {
        r - TAU
    } else if r < -PI {
        -PI
    } else {
        r
    }
}

/// A planar pose or rigid transform: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn origin() -> Self {
        Self::default()
    }

    /// `self ⊕ rel`: applies a transform expressed in this pose's frame.
    pub fn compose(&self, rel: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D {
            x: self.x + c * rel.x - s * rel.y,
            y: self.y + s * rel.x + c * rel.y,
            theta: wrap(self.theta + rel.theta),
        }
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D {
            x: -c * self.x - s * self.y,
            y: s * self.x - c * self.y,
            theta: wrap(-self.theta),
        }
    }

    /// Transform taking `self` to `other`, expressed in `self`'s frame.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Body-frame motion between two consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    /// Forward, meters.
    pub dx: f64,
    /// Lateral (left positive), meters.
    pub dy: f64,
    pub dtheta: f64,
}

impl OdometryDelta {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Result<Self> {
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::NonFinite("odometry delta"));
        }
        Ok(Self {
            dx,
            dy,
            dtheta: wrap_angle(dtheta)?,
        })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_transform(&self) -> Pose2D {
        Pose2D {
            x: self.dx,
            y: self.dy,
            theta: self.dtheta,
        }
    }

    /// Body-frame delta that moves `from` onto `to`.
    pub fn between(from: &Pose2D, to: &Pose2D) -> Self {
        let rel = from.between(to);
        Self {
            dx: rel.x,
            dy: rel.y,
            dtheta: rel.theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()) {
            return Err(Error::NonFinite("odometry delta"));
        }
        if !(-PI..PI).contains(&self.dtheta) {
            return Err(Error::OutOfRange(format!("odometry dtheta {}", self.dtheta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ImageShape {
    fn default() -> Self {
        Self::new(64, 64, 3)
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A camera frame, row-major channel-last, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    shape: ImageShape,
    pixels: Vec<f64>,
}

impl Observation {
    pub fn new(shape: ImageShape, pixels: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Empty("observation shape"));
        }
        if pixels.len() != shape.len() {
            return Err(Error::Dimension {
                what: "observation pixels",
                expected: shape.len(),
                got: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::OutOfRange(format!("pixel value {bad}")));
        }
        Ok(Self { shape, pixels })
    }

    pub fn filled(shape: ImageShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.shape.width + col) * self.shape.channels + channel]
    }
}

/// Control vector applied between the previous frame and this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub controls: Vec<f64>,
}

impl Action {
    pub fn new(controls: Vec<f64>) -> Result<Self> {
        if controls.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        Ok(Self { controls })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            controls: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.controls.len()
    }
}

/// One timestep of a recorded or simulated sequence.
///
/// `action` and `odometry` describe the motion from frame `t - 1` to frame
/// `t`, so the record pairs `a_{t-1}` with `o_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: usize,
    pub observation: Observation,
    pub action: Action,
    pub odometry: OdometryDelta,
    pub ground_truth: Option<Pose2D>,
}

/// Checks the per-sequence invariants: strictly increasing `t`, constant
/// observation shape and action dimension.
pub fn validate_sequence(frames: &[FrameRecord]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::Empty("frame sequence"));
    };
    let shape = first.observation.shape();
    let adim = first.action.dim();
    for pair in frames.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::OutOfRange(format!(
                "frame index {} follows {}",
                pair[1].t, pair[0].t
            )));
        }
    }
    for f in frames {
        if f.observation.shape() != shape {
            return Err(Error::Dimension {
                what: "observation size",
                expected: shape.len(),
                got: f.observation.shape().len(),
            });
        }
        if f.action.dim() != adim {
            return Err(Error::Dimension {
                what: "action dimension",
                expected: adim,
                got: f.action.dim(),
            });
        }
        f.odometry.validate()?;
    }
    Ok(())
}
