//! Topological experience map: nodes pair a view cell with a pose-cell
//! location and an unwrapped map-frame pose; links carry odometry between
//! consecutive activations.

mod file;
mod metrics;
mod relax;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::{OdometryDelta, Pose2D};
use crate::error::{Error, Result};
use crate::pose_cells::{CellCoords, DecodedPose};
use crate::view_cells::ViewMatch;

pub use file::{load_map, save_map, write_edge_csv, MapFile, MAP_VERSION};
pub use metrics::{topology_metrics, MetricParams, TopologyMetrics, TracePoint};
pub use relax::{link_residual, total_residual, RelaxReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    /// Pose-cell agreement radius (wrapped Chebyshev distance, in cells) a
    /// matched view cell's experience must satisfy to be re-entered.
    pub match_radius: usize,
    pub relax_alpha: f64,
    /// Relaxation sweeps run after each loop closure.
    pub relax_iterations: usize,
    /// Relax after every frame instead of only on loop closures.
    pub relax_every_frame: bool,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            match_radius: 4,
            relax_alpha: 0.25,
            relax_iterations: 20,
            relax_every_frame: false,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.relax_alpha) {
            return Err(Error::Config(format!(
                "relax_alpha must lie in [0, 0.5], got {}",
                self.relax_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub id: usize,
    pub map_pose: Pose2D,
    pub view_cell_id: usize,
    pub pose_coords: CellCoords,
    pub visit_count: usize,
    /// Frame index at which the experience was created.
    pub created_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from_id: usize,
    pub to_id: usize,
    /// Odometry accumulated between leaving `from` and arriving at `to`,
    /// expressed in `from`'s frame.
    pub relative_pose: Pose2D,
    pub loop_closure: bool,
    pub created_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapEvent {
    Created { id: usize },
    /// Re-entered an experience older than the one just left (by more than
    /// one creation step).
    LoopClosure { from: usize, to: usize },
    /// Moved to another existing experience without closing a loop.
    Transition { from: usize, to: usize },
    Stay { id: usize },
}

impl MapEvent {
    /// Experience active after the event.
    pub fn current(&self) -> usize {
        match *self {
            MapEvent::Created { id } | MapEvent::Stay { id } => id,
            MapEvent::LoopClosure { to, .. } | MapEvent::Transition { to, .. } => to,
        }
    }

    pub fn is_loop_closure(&self) -> bool {
        matches!(self, MapEvent::LoopClosure { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct ExperienceMap {
    experiences: Vec<Experience>,
    links: Vec<Link>,
    current: Option<usize>,
    accumulated: Pose2D,
    by_view_cell: HashMap<usize, Vec<usize>>,
    link_pairs: HashSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapRepr {
    experiences: Vec<Experience>,
    links: Vec<Link>,
    current_experience_id: Option<usize>,
    accumulated_odometry: Pose2D,
}

impl From<ExperienceMap> for MapRepr {
    fn from(m: ExperienceMap) -> Self {
        MapRepr {
            experiences: m.experiences,
            links: m.links,
            current_experience_id: m.current,
            accumulated_odometry: m.accumulated,
        }
    }
}

impl TryFrom<MapRepr> for ExperienceMap {
    type Error = Error;

    fn try_from(r: MapRepr) -> Result<Self> {
        ExperienceMap::from_parts(
            r.experiences,
            r.links,
            r.current_experience_id,
            r.accumulated_odometry,
        )
    }
}

impl ExperienceMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a map, checking ids are dense and links do not dangle.
    pub fn from_parts(
        experiences: Vec<Experience>,
        links: Vec<Link>,
        current: Option<usize>,
        accumulated: Pose2D,
    ) -> Result<Self> {
        let mut m = ExperienceMap {
            accumulated,
            current,
            ..Default::default()
        };
        for (i, e) in experiences.into_iter().enumerate() {
            if e.id != i {
                return Err(Error::OutOfRange(format!(
                    "experience ids must be dense from 0, found {} at position {i}",
                    e.id
                )));
            }
            if e.visit_count == 0 {
                return Err(Error::OutOfRange(format!(
                    "experience {i} has zero visits"
                )));
            }
            m.by_view_cell.entry(e.view_cell_id).or_default().push(e.id);
            m.experiences.push(e);
        }
        let n = m.experiences.len();
        for l in links {
            if l.from_id >= n || l.to_id >= n || l.from_id == l.to_id {
                return Err(Error::OutOfRange(format!(
                    "link {} -> {} is invalid for {n} experiences",
                    l.from_id, l.to_id
                )));
            }
            if !m.link_pairs.insert((l.from_id, l.to_id)) {
                return Err(Error::OutOfRange(format!(
                    "duplicate link {} -> {}",
                    l.from_id, l.to_id
                )));
            }
            m.links.push(l);
        }
        match current {
            Some(c) if c >= n => {
                return Err(Error::OutOfRange(format!("current experience {c}")))
            }
            None if n > 0 => {
                return Err(Error::OutOfRange("non-empty map without a current experience".into()))
            }
            _ => {}
        }
        Ok(m)
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    pub fn accumulated_odometry(&self) -> Pose2D {
        self.accumulated
    }

    pub fn loop_closure_count(&self) -> usize {
        self.links.iter().filter(|l| l.loop_closure).count()
    }

    fn create(&mut self, view_cell_id: usize, coords: CellCoords, frame: usize) -> usize {
        let id = self.experiences.len();
        let map_pose = match self.current {
            Some(c) => self.experiences[c].map_pose.compose(&self.accumulated),
            None => Pose2D::origin(),
        };
        self.experiences.push(Experience {
            id,
            map_pose,
            view_cell_id,
            pose_coords: coords,
            visit_count: 1,
            created_at: frame,
        });
        self.by_view_cell.entry(view_cell_id).or_default().push(id);
        if let Some(c) = self.current {
            self.add_link(c, id, false, frame);
        }
        self.current = Some(id);
        self.accumulated = Pose2D::origin();
        id
    }

    fn add_link(&mut self, from: usize, to: usize, loop_closure: bool, frame: usize) {
        if self.link_pairs.insert((from, to)) {
            self.links.push(Link {
                from_id: from,
                to_id: to,
                relative_pose: self.accumulated,
                loop_closure,
                created_at: frame,
            });
        }
    }

    /// Experience of `view_cell_id` closest to `coords` in pose-cell space,
    /// if one lies within `radius`. Ties go to the lowest id.
    pub fn find_agreeing(
        &self,
        view_cell_id: usize,
        coords: CellCoords,
        dims: [usize; 3],
        radius: usize,
    ) -> Option<usize> {
        self.by_view_cell
            .get(&view_cell_id)?
            .iter()
            .map(|&id| (self.experiences[id].pose_coords.wrapped_distance(&coords, dims), id))
            .filter(|(d, _)| *d <= radius)
            .min()
            .map(|(_, id)| id)
    }

    /// Advances the map by one frame.
    pub fn step(
        &mut self,
        view: ViewMatch,
        decoded: &DecodedPose,
        odometry: &OdometryDelta,
        frame: usize,
        dims: [usize; 3],
        cfg: &MapConfig,
    ) -> Result<(MapEvent, Option<RelaxReport>)> {
        odometry.validate()?;
        cfg.validate()?;
        let Some(cur) = self.current else {
            let id = self.create(view.cell_id, decoded.coords, frame);
            return Ok((MapEvent::Created { id }, None));
        };
        self.accumulated = self.accumulated.compose(&odometry.as_transform());

        let target = if view.is_new {
            None
        } else {
            self.find_agreeing(view.cell_id, decoded.coords, dims, cfg.match_radius)
        };
        let event = match target {
            None => MapEvent::Created {
                id: self.create(view.cell_id, decoded.coords, frame),
            },
            Some(t) if t == cur => MapEvent::Stay { id: cur },
            Some(t) => {
                let closure = t + 1 < cur;
                self.add_link(cur, t, closure, frame);
                self.experiences[t].visit_count += 1;
                self.current = Some(t);
                self.accumulated = Pose2D::origin();
                if closure {
                    MapEvent::LoopClosure { from: cur, to: t }
                } else {
                    MapEvent::Transition { from: cur, to: t }
                }
            }
        };
        let report = if cfg.relax_iterations > 0 && (event.is_loop_closure() || cfg.relax_every_frame)
        {
            Some(self.relax(cfg.relax_iterations, cfg.relax_alpha)?)
        } else {
            None
        };
        Ok((event, report))
    }

    pub(crate) fn poses_mut(&mut self) -> impl Iterator<Item = &mut Pose2D> {
        self.experiences.iter_mut().map(|e| &mut e.map_pose)
    }
}
