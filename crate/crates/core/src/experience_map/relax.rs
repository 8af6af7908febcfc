//! Damped Jacobi relaxation of experience poses against their links.

use serde::{Deserialize, Serialize};

use super::{ExperienceMap, Link};
use crate::domain::{wrap, Pose2D};
use crate::error::{Error, Result};

/// Halvings tried before a sweep is abandoned as non-improving.
const MAX_BACKTRACK: usize = 30;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxReport {
    /// Total squared link residual before the first sweep and after each one.
    pub residuals: Vec<f64>,
    /// Step actually taken in each sweep (alpha, a halving of it, or 0).
    pub steps: Vec<f64>,
}

/// Squared disagreement between `to` and the pose `from ⊕ rel` implies.
pub fn link_residual(from: &Pose2D, to: &Pose2D, rel: &Pose2D) -> f64 {
    let implied = from.compose(rel);
    let dth = wrap(implied.theta - to.theta);
    (implied.x - to.x).powi(2) + (implied.y - to.y).powi(2) + dth * dth
}

pub fn total_residual(poses: &[Pose2D], links: &[Link]) -> f64 {
    links
        .iter()
        .map(|l| link_residual(&poses[l.from_id], &poses[l.to_id], &l.relative_pose))
        .sum()
}

/// Mean offset from each node's pose to the poses its links imply for it.
fn corrections(poses: &[Pose2D], links: &[Link]) -> Vec<(f64, f64, f64, usize)> {
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize); poses.len()];
    for l in links {
        let (a, b) = (&poses[l.from_id], &poses[l.to_id]);
        let to_implied = a.compose(&l.relative_pose);
        let from_implied = b.compose(&l.relative_pose.inverse());
        for (node, implied, cur) in [(l.to_id, to_implied, b), (l.from_id, from_implied, a)] {
            let e = &mut acc[node];
            e.0 += implied.x - cur.x;
            e.1 += implied.y - cur.y;
            e.2 += wrap(implied.theta - cur.theta);
            e.3 += 1;
        }
    }
    acc
}

fn moved(poses: &[Pose2D], corr: &[(f64, f64, f64, usize)], step: f64) -> Vec<Pose2D> {
    poses
        .iter()
        .zip(corr)
        .enumerate()
        .map(|(i, (p, c))| {
            // the first experience anchors the map frame
            if i == 0 || c.3 == 0 {
                return *p;
            }
            let n = c.3 as f64;
            Pose2D::new(
                p.x + step * c.0 / n,
                p.y + step * c.1 / n,
                p.theta + step * c.2 / n,
            )
        })
        .collect()
}

impl ExperienceMap {
    /// Runs `iterations` sweeps. Each sweep moves every experience except the
    /// first by `alpha` times the mean disagreement with its incident links;
    /// if that would raise the total residual the step is halved until it
    /// does not, or skipped.
    pub fn relax(&mut self, iterations: usize, alpha: f64) -> Result<RelaxReport> {
        if !(0.0..=0.5).contains(&alpha) {
            return Err(Error::Config(format!("relax alpha {alpha} outside [0, 0.5]")));
        }
        let mut poses: Vec<Pose2D> = self.experiences.iter().map(|e| e.map_pose).collect();
        let mut residual = total_residual(&poses, &self.links);
        let mut report = RelaxReport {
            residuals: vec![residual],
            steps: Vec::with_capacity(iterations),
        };
        for _ in 0..iterations {
            let corr = corrections(&poses, &self.links);
            let mut step = alpha;
            let mut taken = 0.0;
            for _ in 0..MAX_BACKTRACK {
                if step == 0.0 {
                    break;
                }
                let cand = moved(&poses, &corr, step);
                let r = total_residual(&cand, &self.links);
                if r <= residual {
                    poses = cand;
                    residual = r;
                    taken = step;
                    break;
                }
                step *= 0.5;
            }
            debug_assert!(residual <= *report.residuals.last().unwrap());
            report.residuals.push(residual);
            report.steps.push(taken);
        }
        for (p, new) in self.poses_mut().zip(poses) {
            *p = new;
        }
        Ok(report)
    }
}
