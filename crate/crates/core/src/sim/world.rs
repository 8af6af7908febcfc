//! Procedural warehouse and its raycast camera.
//!
//! Aisles run along +x from `x = 0` to `x = aisle_length`; aisle `k` is
//! centred on `y = k · aisle_spacing`. Solid rack blocks fill the space
//! between neighbouring aisles and are lined with shelves. Cross corridors of
//! width `corridor_width` connect the aisle ends, closed by end walls.
//!
//! The rack layout is rendered as repeating across aisles (the band of racks
//! is periodic in y), so what distinguishes aisle `k` from aisle `k'` is only
//! the aisle-specific part of the shelf textures, weighted by
//! `1 − aliasing_level`.

use serde::{Deserialize, Serialize};

use crate::domain::{ImageShape, Observation, Pose2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarehouseSpec {
    pub num_aisles: usize,
    pub aisle_length: f64,
    /// Centre-to-centre distance between neighbouring aisles.
    pub aisle_spacing: f64,
    pub aisle_width: f64,
    pub corridor_width: f64,
    pub rack_height: f64,
    pub bay_width: f64,
    pub shelf_levels: usize,
    pub texture_seed: u64,
    /// 0: every aisle has its own shelf contents; 1: all aisles identical.
    pub aliasing_level: f64,
}

impl Default for WarehouseSpec {
    fn default() -> Self {
        Self {
            num_aisles: 3,
            aisle_length: 8.0,
            aisle_spacing: 3.0,
            aisle_width: 2.0,
            corridor_width: 2.0,
            rack_height: 3.0,
            bay_width: 1.0,
            shelf_levels: 4,
            texture_seed: 0,
            aliasing_level: 0.9,
        }
    }
}

impl WarehouseSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.num_aisles < 1 {
            return Err(Error::Config("num_aisles must be at least 1".into()));
        }
        if !(positive(self.aisle_length)
            && positive(self.aisle_width)
            && positive(self.corridor_width)
            && positive(self.rack_height)
            && positive(self.bay_width))
        {
            return Err(Error::Config("warehouse dimensions must be positive".into()));
        }
        if !(self.aisle_spacing > self.aisle_width && self.aisle_spacing.is_finite()) {
            return Err(Error::Config(
                "aisle_spacing must exceed aisle_width to leave room for racks".into(),
            ));
        }
        if self.shelf_levels == 0 {
            return Err(Error::Config("shelf_levels must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.aliasing_level) {
            return Err(Error::Config("aliasing_level must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn half_width(&self) -> f64 {
        self.aisle_width / 2.0
    }

    /// Lowest and highest y of the walled area.
    pub fn y_extent(&self) -> (f64, f64) {
        let rack = self.aisle_spacing - self.aisle_width;
        (
            -self.half_width() - rack,
            (self.num_aisles - 1) as f64 * self.aisle_spacing + self.half_width() + rack,
        )
    }

    /// Lowest and highest x of the walled area.
    pub fn x_extent(&self) -> (f64, f64) {
        (-self.corridor_width, self.aisle_length + self.corridor_width)
    }

    fn in_rack_band(&self, y: f64) -> bool {
        (y - self.half_width()).rem_euclid(self.aisle_spacing) < self.aisle_spacing - self.aisle_width
    }

    /// True if `(x, y)` is open floor inside the walls.
    pub fn is_free(&self, x: f64, y: f64) -> bool {
        let (x0, x1) = self.x_extent();
        let (y0, y1) = self.y_extent();
        if !(x > x0 && x < x1 && y > y0 && y < y1) {
            return false;
        }
        !((0.0..=self.aisle_length).contains(&x) && self.in_rack_band(y))
    }

    /// Aisle whose floor contains `(x, y)`, if any.
    pub fn aisle_at(&self, x: f64, y: f64) -> Option<usize> {
        if !(0.0..=self.aisle_length).contains(&x) {
            return None;
        }
        let k = (y / self.aisle_spacing).round();
        if k < 0.0 || k >= self.num_aisles as f64 || (y - k * self.aisle_spacing).abs() > self.half_width() {
            return None;
        }
        Some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSpec {
    pub shape: ImageShape,
    pub fov_degrees: f64,
    /// Camera height above the floor, metres.
    pub height: f64,
    pub max_range: f64,
    /// Distance at which fog hides `1 − 1/e` of a surface.
    pub fog_distance: f64,
    /// Rays per pixel along each axis.
    pub supersample: usize,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            shape: ImageShape::default(),
            fov_degrees: 90.0,
            height: 1.2,
            max_range: 15.0,
            fog_distance: 8.0,
            supersample: 2,
        }
    }
}

impl CameraSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.channels != 1 && self.shape.channels != 3 {
            return Err(Error::Config("camera must have 1 or 3 channels".into()));
        }
        if self.shape.height == 0 || self.shape.width == 0 {
            return Err(Error::Config("camera image must be non-empty".into()));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return Err(Error::Config("fov_degrees must lie in (0, 180)".into()));
        }
        if !(self.height > 0.0 && self.max_range > 0.0 && self.fog_distance > 0.0) {
            return Err(Error::Config("camera distances must be positive".into()));
        }
        if self.supersample == 0 {
            return Err(Error::Config("supersample must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Face {
    /// Shelf face lining aisle `aisle` on its north (+y) or south side.
    Side { aisle: i64, north: bool },
    /// End of rack block `block` (between aisles `block` and `block + 1`).
    End { block: i64, east: bool },
    Wall,
}

struct Hit {
    t: f64,
    face: Face,
    /// Horizontal coordinate along the face, metres.
    u: f64,
}

const EPS: f64 = 1e-9;
const FOG: [f64; 3] = [0.55, 0.55, 0.58];

fn cast(spec: &WarehouseSpec, max_range: f64, px: f64, py: f64, dx: f64, dy: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let offer = |best: &mut Option<Hit>, h: Hit| {
        if h.t > EPS && h.t <= max_range && best.as_ref().is_none_or(|b| h.t < b.t) {
            *best = Some(h);
        }
    };
    let (x0, x1) = spec.x_extent();
    let l = spec.aisle_length;
    let hw = spec.half_width();
    let s = spec.aisle_spacing;
    if dx.abs() > EPS {
        let wall_x = if dx > 0.0 { x1 } else { x0 };
        let t = (wall_x - px) / dx;
        offer(&mut best, Hit {
            t,
            face: Face::Wall,
            u: py + t * dy,
        });
        // rack ends are entered from the corridors
        for (edge, east) in [(0.0, false), (l, true)] {
            let entering = if east { dx < 0.0 && px >= l } else { dx > 0.0 && px <= 0.0 };
            if entering {
                let t = (edge - px) / dx;
                let y = py + t * dy;
                if spec.in_rack_band(y) {
                    let block = ((y - hw) / s).floor() as i64;
                    offer(&mut best, Hit {
                        t,
                        face: Face::End { block, east },
                        u: (y - hw).rem_euclid(s),
                    });
                }
            }
        }
    }
    if dy.abs() > EPS {
        // horizontal rack faces: y = k·s + hw (north side of aisle k, hit
        // moving +y) and y = k·s − hw (south side, hit moving −y)
        let limit = best.as_ref().map_or(max_range, |b| b.t);
        let mut k = if dy > 0.0 {
            ((py - hw) / s).ceil() as i64
        } else {
            ((py + hw) / s).floor() as i64
        };
        loop {
            let y = if dy > 0.0 { k as f64 * s + hw } else { k as f64 * s - hw };
            let t = (y - py) / dy;
            if t > limit {
                break;
            }
            let x = px + t * dx;
            if t > EPS && (0.0..=l).contains(&x) {
                offer(&mut best, Hit {
                    t,
                    face: Face::Side { aisle: k, north: dy > 0.0 },
                    u: x,
                });
                break;
            }
            k += if dy > 0.0 { 1 } else { -1 };
        }
    }
    best
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5151_5151, |h, &p| splitmix(h ^ splitmix(p)))
}

fn unit(h: u64, i: u64) -> f64 {
    (splitmix(h ^ i.wrapping_mul(0x2545_F491_4F6C_DD1D)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Box colour stored in one shelf slot.
fn slot_colour(key: u64) -> [f64; 3] {
    let base = 0.25 + 0.6 * unit(key, 0);
    let tint = [unit(key, 1), unit(key, 2), unit(key, 3)];
    [
        (base + 0.3 * (tint[0] - 0.5)).clamp(0.05, 1.0),
        (base + 0.3 * (tint[1] - 0.5)).clamp(0.05, 1.0),
        (base + 0.3 * (tint[2] - 0.5)).clamp(0.05, 1.0),
    ]
}

/// How much of the slot width a box fills, and its top as a slot fraction.
fn slot_box(key: u64) -> (f64, f64, f64) {
    let w = 0.45 + 0.5 * unit(key, 7);
    let start = (1.0 - w) * unit(key, 8);
    let top = 0.5 + 0.45 * unit(key, 9);
    (start, start + w, top)
}

fn shelf_texel(seed: u64, spec: &WarehouseSpec, kind: u64, aisle: i64, bay: i64, level: i64, fu: f64, fz: f64) -> [f64; 3] {
    const UPRIGHT: [f64; 3] = [0.2, 0.22, 0.3];
    const BEAM: [f64; 3] = [0.75, 0.45, 0.15];
    const BACK: [f64; 3] = [0.12, 0.12, 0.12];
    if !(0.06..=0.94).contains(&fu) {
        return UPRIGHT;
    }
    if fz < 0.08 {
        return BEAM;
    }
    let a = spec.aliasing_level;
    let key = hash(&[seed, kind, bay as u64, level as u64]);
    let (b0, b1, top) = slot_box(key);
    if !(fu >= b0 && fu <= b1 && fz <= top) {
        return BACK;
    }
    let shared = slot_colour(key);
    // aisle cue: a colour common to the whole aisle plus a per-slot variation
    let cue = aisle_colour(seed, aisle);
    let own = slot_colour(hash(&[seed, kind, bay as u64, level as u64, (aisle as u64).wrapping_add(1)]));
    std::array::from_fn(|i| a * shared[i] + (1.0 - a) * (0.6 * cue[i] + 0.4 * own[i]))
}

fn aisle_colour(seed: u64, aisle: i64) -> [f64; 3] {
    let h = hash(&[seed, 0xa15e, aisle as u64]);
    std::array::from_fn(|i| 0.1 + 0.9 * unit(h, i as u64))
}

fn surface(spec: &WarehouseSpec, face: Face, u: f64, z: f64) -> [f64; 3] {
    let seed = spec.texture_seed;
    let level_h = spec.rack_height / spec.shelf_levels as f64;
    let level = (z / level_h).floor().clamp(0.0, spec.shelf_levels as f64 - 1.0) as i64;
    let fz = z / level_h - level as f64;
    match face {
        Face::Side { aisle, north } => {
            let bay = (u / spec.bay_width).floor() as i64;
            let fu = u / spec.bay_width - bay as f64;
            let c = shelf_texel(seed, spec, north as u64, aisle, bay, level, fu, fz);
            let shade = if north { 1.0 } else { 0.92 };
            c.map(|v| v * shade)
        }
        Face::End { block, east } => {
            let depth = spec.aisle_spacing - spec.aisle_width;
            let c = shelf_texel(seed, spec, 2 + east as u64, block, 0, level, u / depth, fz);
            c.map(|v| v * 0.8)
        }
        Face::Wall => {
            // stripes repeat with the aisle spacing
            let p = u.rem_euclid(spec.aisle_spacing) / spec.aisle_spacing;
            let band = if (p * 6.0).floor() as i64 % 2 == 0 { 0.62 } else { 0.7 };
            let v = if z < 1.0 { band * 0.8 } else { band };
            [v, v, v * 1.05]
        }
    }
}

fn fogged(c: [f64; 3], dist: f64, fog_distance: f64) -> [f64; 3] {
    let f = (-dist / fog_distance).exp();
    [0, 1, 2].map(|i| c[i] * f + FOG[i] * (1.0 - f))
}

/// Renders the camera view from `pose`, quantised to 8-bit levels.
pub fn render_observation(pose: &Pose2D, spec: &WarehouseSpec, camera: &CameraSpec) -> Result<Observation> {
    spec.validate()?;
    camera.validate()?;
    if !pose.is_finite() {
        return Err(Error::NonFinite("render pose"));
    }
    if !spec.is_free(pose.x, pose.y) {
        return Err(Error::OutOfRange(format!(
            "pose ({:.3}, {:.3}) is not on open floor",
            pose.x, pose.y
        )));
    }
    let ImageShape { height: h, width: w, channels } = camera.shape;
    let focal = (w as f64 / 2.0) / (camera.fov_degrees.to_radians() / 2.0).tan();
    let ss = camera.supersample;
    let mut sums = vec![[0.0f64; 3]; h * w];
    let (sin_t, cos_t) = pose.theta.sin_cos();
    for col in 0..w {
        for sx in 0..ss {
            let cx = col as f64 + (sx as f64 + 0.5) / ss as f64;
            // image x grows to the right, i.e. towards −y in the body frame
            let lateral = w as f64 / 2.0 - cx;
            let (bx, by) = (focal, lateral);
            let norm = (bx * bx + by * by).sqrt();
            let (bx, by) = (bx / norm, by / norm);
            let cos_a = bx;
            let dx = cos_t * bx - sin_t * by;
            let dy = sin_t * bx + cos_t * by;
            let hit = cast(spec, camera.max_range, pose.x, pose.y, dx, dy);
            for row in 0..h {
                for sy in 0..ss {
                    let cy = row as f64 + (sy as f64 + 0.5) / ss as f64;
                    let v = h as f64 / 2.0 - cy;
                    let c = shade_sample(spec, camera, hit.as_ref(), cos_a, v, focal);
                    let acc = &mut sums[row * w + col];
                    for i in 0..3 {
                        acc[i] += c[i];
                    }
                }
            }
        }
    }
    let n = (ss * ss) as f64;
    let mut pixels = Vec::with_capacity(camera.shape.len());
    for acc in sums {
        let rgb = acc.map(|v| v / n);
        if channels == 1 {
            pixels.push(quantize(0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]));
        } else {
            pixels.extend(rgb.map(quantize));
        }
    }
    Observation::new(camera.shape, pixels)
}

fn shade_sample(spec: &WarehouseSpec, camera: &CameraSpec, hit: Option<&Hit>, cos_a: f64, v: f64, focal: f64) -> [f64; 3] {
    let wall_depth = hit.map(|h| h.t * cos_a);
    if v < 0.0 {
        let floor_depth = camera.height * focal / -v;
        if wall_depth.is_none_or(|d| floor_depth < d) {
            let dist = floor_depth / cos_a;
            return fogged([0.32, 0.31, 0.3], dist.min(camera.max_range), camera.fog_distance);
        }
    } else if v > 0.0 {
        let ceil_depth = (spec.rack_height - camera.height) * focal / v;
        if wall_depth.is_none_or(|d| ceil_depth < d) {
            let dist = ceil_depth / cos_a;
            return fogged([0.82, 0.82, 0.8], dist.min(camera.max_range), camera.fog_distance);
        }
    }
    match (hit, wall_depth) {
        (Some(h), Some(d)) => {
            let z = (camera.height + d * v / focal).clamp(0.0, spec.rack_height - 1e-9);
            fogged(surface(spec, h.face, h.u, z), h.t, camera.fog_distance)
        }
        _ => FOG,
    }
}

pub(crate) fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}
