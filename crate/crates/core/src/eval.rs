//! Place-recognition separation under perceptual aliasing.
//!
//! Two frames are an *intra-place* pair when ground truth puts them in the
//! same aisle, within `position_tolerance` of each other and
//! `heading_tolerance` in heading, and at least `min_frame_gap` frames apart
//! (or in different sequences). They are an *inter-aisle* pair when they sit
//! at corresponding positions (same x, same offset from the aisle centre,
//! same heading) in two different aisles. The AUC is the probability that a
//! random inter-aisle pair is farther apart than a random intra-place pair.

use serde::{Deserialize, Serialize};

use crate::domain::{wrap, Pose2D};
use crate::error::{Error, Result};
use crate::sim::WarehouseSpec;
use crate::view_cells::cosine_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationParams {
    pub position_tolerance: f64,
    pub heading_tolerance: f64,
    pub min_frame_gap: usize,
    /// Pairs of each kind kept (evenly strided) for scoring.
    pub max_pairs: usize,
}

impl Default for SeparationParams {
    fn default() -> Self {
        Self {
            position_tolerance: 0.3,
            heading_tolerance: 10f64.to_radians(),
            min_frame_gap: 30,
            max_pairs: 20_000,
        }
    }
}

/// One frame taking part in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceSample {
    pub sequence: usize,
    pub frame: usize,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlacePairs {
    pub intra: Vec<(usize, usize)>,
    pub inter: Vec<(usize, usize)>,
}

fn thin(pairs: Vec<(usize, usize)>, max: usize) -> Vec<(usize, usize)> {
    if pairs.len() <= max || max == 0 {
        return pairs;
    }
    let stride = pairs.len() as f64 / max as f64;
    (0..max).map(|i| pairs[(i as f64 * stride) as usize]).collect()
}

pub fn place_pairs(samples: &[PlaceSample], spec: &WarehouseSpec, params: &SeparationParams) -> PlacePairs {
    let aisles: Vec<Option<usize>> = samples.iter().map(|s| spec.aisle_at(s.pose.x, s.pose.y)).collect();
    let tol = params.position_tolerance;
    let mut out = PlacePairs::default();
    for i in 0..samples.len() {
        let Some(ai) = aisles[i] else { continue };
        let a = &samples[i];
        for j in i + 1..samples.len() {
            let Some(aj) = aisles[j] else { continue };
            let b = &samples[j];
            if (a.pose.x - b.pose.x).abs() > tol || wrap(a.pose.theta - b.pose.theta).abs() > params.heading_tolerance {
                continue;
            }
            let oa = a.pose.y - ai as f64 * spec.aisle_spacing;
            let ob = b.pose.y - aj as f64 * spec.aisle_spacing;
            if (oa - ob).abs() > tol {
                continue;
            }
            if ai == aj {
                if a.sequence != b.sequence || a.frame.abs_diff(b.frame) >= params.min_frame_gap {
                    out.intra.push((i, j));
                }
            } else {
                out.inter.push((i, j));
            }
        }
    }
    out.intra = thin(out.intra, params.max_pairs);
    out.inter = thin(out.inter, params.max_pairs);
    out
}

/// Mann-Whitney estimate of `P(inter > intra)`, counting ties as one half.
pub fn auc(intra: &[f64], inter: &[f64]) -> Result<f64> {
    if intra.is_empty() || inter.is_empty() {
        return Err(Error::Empty("pair distances"));
    }
    if intra.iter().chain(inter).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pair distance"));
    }
    let mut all: Vec<(f64, bool)> = intra.iter().map(|&d| (d, false)).chain(inter.iter().map(|&d| (d, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rank sum of the inter distances with average ranks for ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let n1 = inter.len() as f64;
    let n0 = intra.len() as f64;
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub intra_pairs: usize,
    pub inter_pairs: usize,
    pub mean_intra: f64,
    pub mean_inter: f64,
    pub auc: f64,
}

pub fn separation<F>(vectors: &[&[f64]], pairs: &PlacePairs, distance: F) -> Result<Separation>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let score = |ps: &[(usize, usize)]| -> Result<Vec<f64>> {
        ps.iter().map(|&(i, j)| distance(vectors[i], vectors[j])).collect()
    };
    let intra = score(&pairs.intra)?;
    let inter = score(&pairs.inter)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(Separation {
        intra_pairs: intra.len(),
        inter_pairs: inter.len(),
        mean_intra: mean(&intra),
        mean_inter: mean(&inter),
        auc: auc(&intra, &inter)?,
    })
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "vector",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasingReport {
    pub latent_cosine: Separation,
    pub pixel_cosine: Separation,
    pub pixel_euclidean: Separation,
    /// Latent AUC minus the better of the two pixel AUCs.
    pub auc_margin: f64,
}

/// Scores latent codes against the raw pixels of the same frames.
pub fn aliasing_report(
    samples: &[PlaceSample],
    latents: &[&[f64]],
    pixels: &[&[f64]],
    spec: &WarehouseSpec,
    params: &SeparationParams,
) -> Result<AliasingReport> {
    if samples.len() != latents.len() || samples.len() != pixels.len() {
        return Err(Error::Dimension {
            what: "evaluation samples",
            expected: samples.len(),
            got: latents.len().min(pixels.len()),
        });
    }
    let pairs = place_pairs(samples, spec, params);
    let latent_cosine = separation(latents, &pairs, cosine_distance)?;
    let pixel_cosine = separation(pixels, &pairs, cosine_distance)?;
    let pixel_euclidean = separation(pixels, &pairs, euclidean_distance)?;
    let auc_margin = latent_cosine.auc - pixel_cosine.auc.max(pixel_euclidean.auc);
    Ok(AliasingReport {
        latent_cosine,
        pixel_cosine,
        pixel_euclidean,
        auc_margin,
    })
}
