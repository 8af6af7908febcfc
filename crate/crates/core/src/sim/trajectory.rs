//! Waypoint plans and the constant-speed trajectories flown through them.

use serde::{Deserialize, Serialize};

use super::world::WarehouseSpec;
use crate::domain::{wrap, Action, Pose2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSpec {
    pub frames_per_meter: f64,
    /// Largest heading change per frame while turning in place, radians.
    pub yaw_step: f64,
    /// Control dimension; the first four are thrust, roll, pitch, yaw rate.
    pub action_dim: usize,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            frames_per_meter: 10.0,
            yaw_step: 0.2,
            action_dim: 4,
        }
    }
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frames_per_meter > 0.0 && self.frames_per_meter.is_finite()) {
            return Err(Error::Config("frames_per_meter must be positive".into()));
        }
        if !(self.yaw_step > 0.0 && self.yaw_step <= std::f64::consts::PI) {
            return Err(Error::Config("yaw_step must lie in (0, π]".into()));
        }
        if self.action_dim == 0 {
            return Err(Error::Config("action_dim must be at least 1".into()));
        }
        Ok(())
    }

    fn step_length(&self) -> f64 {
        1.0 / self.frames_per_meter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose2D>,
    /// `actions[t]` drives the motion from `poses[t - 1]` to `poses[t]`;
    /// `actions[0]` is zero.
    pub actions: Vec<Action>,
}

/// Corner points of one loop through the first three aisles, starting and
/// ending at the mouth of aisle 0.
pub fn three_aisle_loop(spec: &WarehouseSpec) -> Vec<(f64, f64)> {
    let l = spec.aisle_length;
    let s = spec.aisle_spacing;
    let east = l + spec.corridor_width / 2.0;
    let west = -spec.corridor_width / 2.0;
    vec![
        (0.0, 0.0),
        (east, 0.0),
        (east, s),
        (west, s),
        (west, 2.0 * s),
        (east, 2.0 * s),
        (east, 0.0),
        (west, 0.0),
        (0.0, 0.0),
    ]
}

fn segment_is_free(spec: &WarehouseSpec, a: (f64, f64), b: (f64, f64)) -> bool {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let n = (len / 0.02).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let f = i as f64 / n as f64;
        spec.is_free(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
    })
}

fn action_for(from: &Pose2D, to: &Pose2D, motion: &MotionSpec) -> Action {
    let rel = from.between(to);
    let v = motion.step_length();
    let mut c = vec![0.0; motion.action_dim];
    let base = [
        (rel.x * rel.x + rel.y * rel.y).sqrt() / v,
        rel.y / v,
        rel.x / v,
        rel.theta / motion.yaw_step,
    ];
    for (slot, value) in c.iter_mut().zip(base) {
        *slot = value;
    }
    Action { controls: c }
}

/// Flies the waypoints in order: turn in place towards the next waypoint,
/// then move straight at constant speed, one frame per `1 / frames_per_meter`
/// metres, landing exactly on every waypoint.
pub fn generate_trajectory(
    spec: &WarehouseSpec,
    plan: &[(f64, f64)],
    motion: &MotionSpec,
) -> Result<Trajectory> {
    spec.validate()?;
    motion.validate()?;
    let Some(&start) = plan.first() else {
        return Err(Error::Empty("waypoint plan"));
    };
    for (i, &(x, y)) in plan.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite("waypoint"));
        }
        if !spec.is_free(x, y) {
            return Err(Error::OutOfRange(format!("waypoint {i} at ({x}, {y}) is not on open floor")));
        }
    }
    for (i, w) in plan.windows(2).enumerate() {
        if !segment_is_free(spec, w[0], w[1]) {
            return Err(Error::OutOfRange(format!("leg {i} -> {} crosses a rack or wall", i + 1)));
        }
    }

    let heading0 = plan
        .iter()
        .find(|p| **p != start)
        .map_or(0.0, |p| (p.1 - start.1).atan2(p.0 - start.0));
    let mut poses = vec![Pose2D::new(start.0, start.1, heading0)];
    let step = motion.step_length();
    for &(tx, ty) in &plan[1..] {
        let cur = *poses.last().unwrap();
        let (dx, dy) = (tx - cur.x, ty - cur.y);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-12 {
            continue;
        }
        let heading = dy.atan2(dx);
        let mut turn = wrap(heading - cur.theta);
        let mut theta = cur.theta;
        while turn.abs() > 1e-12 {
            let d = turn.clamp(-motion.yaw_step, motion.yaw_step);
            theta = wrap(theta + d);
            turn -= d;
            poses.push(Pose2D::new(cur.x, cur.y, theta));
        }
        let n = (len / step - 1e-9).ceil() as usize;
        for i in 1..=n {
            let f = (i as f64 * step / len).min(1.0);
            let (x, y) = if i == n { (tx, ty) } else { (cur.x + f * dx, cur.y + f * dy) };
            poses.push(Pose2D::new(x, y, heading));
        }
    }
    let mut actions = Vec::with_capacity(poses.len());
    actions.push(Action::zeros(motion.action_dim));
    for w in poses.windows(2) {
        actions.push(action_for(&w[0], &w[1], motion));
    }
    Ok(Trajectory { poses, actions })
}
