//! View cells: frozen latent templates matched by cosine distance.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pose_cells::{CanConfig, CellCoords};

const MIN_NORM: f64 = 1e-12;

/// `1 − a·b / (‖a‖‖b‖)`, clamped to `[0, 2]` against rounding.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("cosine_distance operand", a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sa = norm_sq(a).map_err(|_| Error::ZeroNorm("cosine_distance operand"))?;
    let sb = norm_sq(b).map_err(|_| Error::ZeroNorm("cosine_distance operand"))?;
    if !dot.is_finite() || !sa.is_finite() || !sb.is_finite() {
        return Err(Error::NonFinite("cosine_distance operand"));
    }
    Ok(from_dot(dot, sa, sb))
}

// sqrt(sa·sb) rather than sqrt(sa)·sqrt(sb) so that identical vectors give
// exactly 0
fn from_dot(dot: f64, sa: f64, sb: f64) -> f64 {
    (1.0 - dot / (sa * sb).sqrt()).clamp(0.0, 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCell {
    pub id: usize,
    template: Vec<f64>,
    #[serde(skip)]
    norm_sq: f64,
    pub linked_pose_coords: CellCoords,
    pub created_at: usize,
}

impl ViewCell {
    pub fn template(&self) -> &[f64] {
        &self.template
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewMatch {
    pub cell_id: usize,
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoreRepr")]
pub struct ViewCellStore {
    match_threshold: f64,
    cells: Vec<ViewCell>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreRepr {
    match_threshold: f64,
    cells: Vec<ViewCell>,
}

impl TryFrom<StoreRepr> for ViewCellStore {
    type Error = Error;

    fn try_from(r: StoreRepr) -> Result<Self> {
        Self::from_cells(r.match_threshold, r.cells)
    }
}

impl ViewCellStore {
    pub const DEFAULT_THRESHOLD: f64 = 0.10;

    pub fn new(match_threshold: f64) -> Result<Self> {
        if !(match_threshold > 0.0 && match_threshold < 2.0) {
            return Err(Error::Config(format!(
                "match threshold must lie in (0, 2), got {match_threshold}"
            )));
        }
        Ok(Self {
            match_threshold,
            cells: Vec::new(),
        })
    }

    /// Rebuilds a store from serialised cells, checking ids and templates.
    pub fn from_cells(match_threshold: f64, cells: Vec<ViewCell>) -> Result<Self> {
        let mut store = Self::new(match_threshold)?;
        for (i, mut c) in cells.into_iter().enumerate() {
            if c.id != i {
                return Err(Error::OutOfRange(format!(
                    "view cell ids must be dense from 0, found {} at position {i}",
                    c.id
                )));
            }
            if let Some(first) = store.cells.first() {
                check_dim("view cell template", first.template.len(), c.template.len())?;
            }
            c.norm_sq = norm_sq(&c.template)?;
            store.cells.push(c);
        }
        Ok(store)
    }

    pub fn match_threshold(&self) -> f64 {
        self.match_threshold
    }

    pub fn cells(&self) -> &[ViewCell] {
        &self.cells
    }

    pub fn get(&self, id: usize) -> Option<&ViewCell> {
        self.cells.get(id)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Closest template and its distance; ties go to the lowest id.
    pub fn nearest(&self, latent: &[f64]) -> Result<Option<(usize, f64)>> {
        let n = norm_sq(latent)?;
        let mut best: Option<(usize, f64)> = None;
        for c in &self.cells {
            check_dim("latent", c.template.len(), latent.len())?;
            let dot: f64 = c.template.iter().zip(latent).map(|(x, y)| x * y).sum();
            let d = from_dot(dot, c.norm_sq, n);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c.id, d));
            }
        }
        Ok(best)
    }

    /// Matches `latent` against the stored templates, or stores it as a new
    /// cell linked to `pose_coords`.
    pub fn match_or_create(
        &mut self,
        latent: &[f64],
        pose_coords: CellCoords,
        frame: usize,
    ) -> Result<ViewMatch> {
        if latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent"));
        }
        if let Some((id, d)) = self.nearest(latent)? {
            if d < self.match_threshold {
                return Ok(ViewMatch {
                    cell_id: id,
                    is_new: false,
                });
            }
        }
        let id = self.cells.len();
        self.cells.push(ViewCell {
            id,
            norm_sq: norm_sq(latent)?,
            template: latent.to_vec(),
            linked_pose_coords: pose_coords,
            created_at: frame,
        });
        Ok(ViewMatch {
            cell_id: id,
            is_new: true,
        })
    }
}

fn norm_sq(v: &[f64]) -> Result<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>();
    if !(n.sqrt() > MIN_NORM) {
        return Err(Error::ZeroNorm("latent"));
    }
    Ok(n)
}

/// Pose-cell injection requested by an active view cell.
pub fn active_injection(cell: &ViewCell, cfg: &CanConfig) -> (CellCoords, f64) {
    (cell.linked_pose_coords, cfg.injection_energy)
}
