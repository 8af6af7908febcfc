//! Map file (versioned JSON) and edge-list export.
//!
//! ```text
//! {
//!   "version": 1,
//!   "config": { ... },              // settings the map was built with
//!   "map": {
//!     "experiences": [{ "id", "map_pose": {x, y, theta}, "view_cell_id",
//!                       "pose_coords": {x, y, theta}, "visit_count", "created_at" }],
//!     "links": [{ "from_id", "to_id", "relative_pose", "loop_closure", "created_at" }],
//!     "current_experience_id": 12,
//!     "accumulated_odometry": {x, y, theta}
//!   },
//!   "view_cells": { "match_threshold", "cells": [{ "id", "template": [..],
//!                   "linked_pose_coords", "created_at" }] }
//! }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperienceMap;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::view_cells::ViewCellStore;

pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub version: u32,
    pub config: serde_json::Value,
    pub map: ExperienceMap,
    pub view_cells: ViewCellStore,
}

impl MapFile {
    pub fn new(map: ExperienceMap, view_cells: ViewCellStore, config: serde_json::Value) -> Self {
        Self {
            version: MAP_VERSION,
            config,
            map,
            view_cells,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("map serialises");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::format(path, e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(path, "missing version"))?;
        if version != MAP_VERSION as u64 {
            return Err(Error::Version {
                found: version.try_into().unwrap_or(u32::MAX),
                expected: MAP_VERSION,
            });
        }
        let file: MapFile =
            serde_json::from_slice(bytes).map_err(|e| Error::format(path, e.to_string()))?;
        for e in file.map.experiences() {
            if file.view_cells.get(e.view_cell_id).is_none() {
                return Err(Error::format(
                    path,
                    format!("experience {} refers to missing view cell {}", e.id, e.view_cell_id),
                ));
            }
        }
        Ok(file)
    }
}

pub fn save_map(path: &Path, file: &MapFile) -> Result<()> {
    write_atomic(path, &file.to_bytes())
}

pub fn load_map(path: &Path) -> Result<MapFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    MapFile::from_bytes(&bytes, path)
}

/// Edge list for plotting: `from_x,from_y,to_x,to_y,is_loop_closure`.
pub fn write_edge_csv(map: &ExperienceMap) -> String {
    let mut s = String::from("from_x,from_y,to_x,to_y,is_loop_closure\n");
    let e = map.experiences();
    for l in map.links() {
        let (a, b) = (&e[l.from_id].map_pose, &e[l.to_id].map_pose);
        let _ = writeln!(s, "{},{},{},{},{}", a.x, a.y, b.x, b.y, l.loop_closure as u8);
    }
    s
}
