//! Ground-truth scoring of a finished map.
//!
//! A frame is a *revisit* when ground truth shows the robot within `radius`
//! metres and `heading_tolerance` radians of where it was at least `min_gap`
//! frames earlier. A revisit is *matched* when the active experience at that
//! frame was created at least `min_gap` frames earlier and its creation-time
//! ground truth lies within `radius` of the current ground truth. A
//! loop-closure link is *false* when the ground truth at the frame it was
//! added is more than `radius` from its target experience's ground truth.

use serde::{Deserialize, Serialize};

use super::ExperienceMap;
use crate::domain::{wrap, Pose2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricParams {
    pub radius: f64,
    pub heading_tolerance: f64,
    pub min_gap: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            heading_tolerance: std::f64::consts::FRAC_PI_4,
            min_gap: 50,
        }
    }
}

/// Active experience and ground truth for one processed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub experience_id: usize,
    pub ground_truth: Option<Pose2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyMetrics {
    pub node_count: usize,
    pub link_count: usize,
    pub revisit_frames: usize,
    pub matched_revisits: usize,
    /// `None` when the run contains no revisits.
    pub revisit_match_rate: Option<f64>,
    pub loop_closures: usize,
    pub false_closures: usize,
    /// 0 when there are no loop closures.
    pub false_closure_rate: f64,
    /// Mean distance between experience map poses and the ground truth at
    /// their creation.
    pub mean_node_error: f64,
}

pub fn topology_metrics(
    map: &ExperienceMap,
    trace: &[TracePoint],
    params: &MetricParams,
) -> Result<TopologyMetrics> {
    let gt: Vec<Pose2D> = trace
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.ground_truth
                .ok_or_else(|| Error::MissingGroundTruth(format!("frame {i}")))
        })
        .collect::<Result<_>>()?;
    let exp_gt: Vec<Pose2D> = map
        .experiences()
        .iter()
        .map(|e| {
            gt.get(e.created_at).copied().ok_or_else(|| {
                Error::MissingGroundTruth(format!(
                    "experience {} created at frame {} beyond trace",
                    e.id, e.created_at
                ))
            })
        })
        .collect::<Result<_>>()?;

    let mut revisit_frames = 0;
    let mut matched = 0;
    for t in params.min_gap..gt.len() {
        let here = &gt[t];
        let revisit = gt[..=t - params.min_gap].iter().any(|p| {
            p.distance(here) < params.radius
                && wrap(p.theta - here.theta).abs() < params.heading_tolerance
        });
        if !revisit {
            continue;
        }
        revisit_frames += 1;
        let e = trace[t].experience_id;
        let exp = map
            .experiences()
            .get(e)
            .ok_or_else(|| Error::OutOfRange(format!("trace refers to experience {e}")))?;
        if exp.created_at + params.min_gap <= t && exp_gt[e].distance(here) < params.radius {
            matched += 1;
        }
    }

    let closures: Vec<_> = map.links().iter().filter(|l| l.loop_closure).collect();
    let mut false_closures = 0;
    for l in &closures {
        let at = gt.get(l.created_at).ok_or_else(|| {
            Error::MissingGroundTruth(format!("link created at frame {}", l.created_at))
        })?;
        if at.distance(&exp_gt[l.to_id]) > params.radius {
            false_closures += 1;
        }
    }

    let n = map.experiences().len();
    let mean_node_error = if n == 0 {
        0.0
    } else {
        map.experiences()
            .iter()
            .map(|e| e.map_pose.distance(&exp_gt[e.id]))
            .sum::<f64>()
            / n as f64
    };
    Ok(TopologyMetrics {
        node_count: n,
        link_count: map.links().len(),
        revisit_frames,
        matched_revisits: matched,
        revisit_match_rate: (revisit_frames > 0).then(|| matched as f64 / revisit_frames as f64),
        loop_closures: closures.len(),
        false_closures,
        false_closure_rate: if closures.is_empty() {
            0.0
        } else {
            false_closures as f64 / closures.len() as f64
        },
        mean_node_error,
    })
}
