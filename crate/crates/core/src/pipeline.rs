//! Per-frame SLAM loop: encode, path-integrate, match or create a view cell,
//! inject, settle the attractor, decode, and advance the experience map.

use serde::{Deserialize, Serialize};

use crate::domain::{FrameRecord, OdometryDelta, Pose2D};
use crate::error::{Error, Result};
use crate::experience_map::{ExperienceMap, MapConfig, MapEvent, TracePoint};
use crate::latent::{LatentSample, ModelParams};
use crate::pose_cells::{CanConfig, CellCoords, PoseCellGrid};
use crate::view_cells::{active_injection, ViewCellStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamConfig {
    pub can: CanConfig,
    pub map: MapConfig,
    /// Cosine distance below which a latent matches a stored view cell.
    pub view_match_threshold: f64,
    pub can_iterations: usize,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            can: CanConfig::default(),
            map: MapConfig::default(),
            view_match_threshold: ViewCellStore::DEFAULT_THRESHOLD,
            can_iterations: 1,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        self.can.validate()?;
        self.map.validate()?;
        if !(self.view_match_threshold > 0.0 && self.view_match_threshold < 2.0) {
            return Err(Error::Config(format!(
                "view_match_threshold must lie in (0, 2), got {}",
                self.view_match_threshold
            )));
        }
        if self.can_iterations == 0 {
            return Err(Error::Config("can_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    pub prev_latent: LatentSample,
    pub grid: PoseCellGrid,
    pub store: ViewCellStore,
    pub map: ExperienceMap,
    pub frame_index: usize,
}

impl SlamState {
    /// Zero latent, all pose-cell activity on the centre cell at heading 0.
    pub fn new(latent_dim: usize, cfg: &SlamConfig) -> Result<Self> {
        cfg.validate()?;
        let c = &cfg.can;
        Ok(Self {
            prev_latent: LatentSample::zeros(latent_dim),
            grid: PoseCellGrid::spike(c, CellCoords::new(c.nx / 2, c.ny / 2, 0))?,
            store: ViewCellStore::new(cfg.view_match_threshold)?,
            map: ExperienceMap::new(),
            frame_index: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub t: usize,
    pub latent: Vec<f64>,
    pub view_cell_id: usize,
    pub view_is_new: bool,
    /// Distance to the nearest stored template before matching; `None` when
    /// the store was empty.
    pub view_distance: Option<f64>,
    pub decoded_pose: Pose2D,
    pub pose_coords: CellCoords,
    pub event: MapEvent,
    pub relaxed: bool,
    pub experience_count: usize,
}

impl FrameReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

fn step(
    state: &mut SlamState,
    latent: LatentSample,
    t: usize,
    odometry: &OdometryDelta,
    cfg: &SlamConfig,
) -> Result<FrameReport> {
    if latent.dim() != state.prev_latent.dim() {
        return Err(Error::Dimension {
            what: "latent",
            expected: state.prev_latent.dim(),
            got: latent.dim(),
        });
    }
    let mut grid = state.grid.path_integrate(odometry, &cfg.can)?;
    let here = grid.decode()?.coords;
    let view_distance = state.store.nearest(&latent.values)?.map(|(_, d)| d);
    let view = state.store.match_or_create(&latent.values, here, state.frame_index)?;
    if !view.is_new {
        let cell = state.store.get(view.cell_id).expect("matched cell exists");
        let (at, energy) = active_injection(cell, &cfg.can);
        grid = grid.inject(at, energy, &cfg.can)?;
    }
    for _ in 0..cfg.can_iterations {
        grid = grid.iterate(&cfg.can)?;
    }
    let decoded = grid.decode()?;
    let (event, relax) = state.map.step(
        view,
        &decoded,
        odometry,
        state.frame_index,
        grid.dims(),
        &cfg.map,
    )?;
    let report = FrameReport {
        frame: state.frame_index,
        t,
        latent: latent.values.clone(),
        view_cell_id: view.cell_id,
        view_is_new: view.is_new,
        view_distance,
        decoded_pose: decoded.pose,
        pose_coords: decoded.coords,
        event,
        relaxed: relax.is_some(),
        experience_count: state.map.experiences().len(),
    };
    state.grid = grid;
    state.prev_latent = latent;
    state.frame_index += 1;
    Ok(report)
}

/// Runs one frame through the pipeline. Errors carry the frame index.
pub fn process_frame(
    state: &mut SlamState,
    frame: &FrameRecord,
    params: &ModelParams,
    cfg: &SlamConfig,
) -> Result<FrameReport> {
    let index = state.frame_index;
    params
        .encode(&state.prev_latent, &frame.action, &frame.observation)
        .and_then(|latent| step(state, latent, frame.t, &frame.odometry, cfg))
        .map_err(|e| Error::Frame {
            index,
            source: Box::new(e),
        })
}

/// Same as [`process_frame`] for a latent code computed elsewhere.
pub fn process_latent(
    state: &mut SlamState,
    latent: LatentSample,
    t: usize,
    odometry: &OdometryDelta,
    cfg: &SlamConfig,
) -> Result<FrameReport> {
    let index = state.frame_index;
    step(state, latent, t, odometry, cfg).map_err(|e| Error::Frame {
        index,
        source: Box::new(e),
    })
}

pub fn run_sequence(
    frames: &[FrameRecord],
    params: &ModelParams,
    cfg: &SlamConfig,
) -> Result<(SlamState, Vec<FrameReport>)> {
    if frames.is_empty() {
        return Err(Error::Empty("frame sequence"));
    }
    let mut state = SlamState::new(params.architecture().latent_dim, cfg)?;
    let mut reports = Vec::with_capacity(frames.len());
    for f in frames {
        reports.push(process_frame(&mut state, f, params, cfg)?);
    }
    Ok((state, reports))
}

/// Active experience and ground truth per frame, for the topology metrics.
///
/// Ground truth is re-expressed relative to the first frame's true pose, the
/// frame in which both dead reckoning and the experience map start.
pub fn trace(frames: &[FrameRecord], reports: &[FrameReport]) -> Vec<TracePoint> {
    let start = frames.first().and_then(|f| f.ground_truth);
    frames
        .iter()
        .zip(reports)
        .map(|(f, r)| TracePoint {
            experience_id: r.event.current(),
            ground_truth: match (start, f.ground_truth) {
                (Some(s), Some(g)) => Some(s.between(&g)),
                _ => None,
            },
        })
        .collect()
}
