//! Pose cells: a 3D continuous attractor network over (x, y, θ).
//!
//! Activity lives on a torus of `nx × ny × nθ` cells stored with x varying
//! fastest: `index = (iθ · ny + iy) · nx + ix`. "Lowest linear index" tie
//! breaks refer to this order.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::domain::{wrap_angle, OdometryDelta, Pose2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanConfig {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    /// Metres per cell along x and y.
    pub cell_size_xy: f64,
    /// Excitation kernel width, in cells.
    pub excite_sigma_xy: f64,
    pub excite_sigma_theta: f64,
    /// Subtracted from every cell after excitation (activity sums to 1).
    pub inhibit_amount: f64,
    pub injection_energy: f64,
}

impl Default for CanConfig {
    fn default() -> Self {
        Self {
            nx: 40,
            ny: 40,
            ntheta: 36,
            cell_size_xy: 0.5,
            excite_sigma_xy: 1.0,
            excite_sigma_theta: 1.0,
            inhibit_amount: 1e-3,
            injection_energy: 0.1,
        }
    }
}

impl CanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 || self.ntheta < 3 {
            return Err(Error::Config("pose-cell dimensions must be at least 3".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.cell_size_xy) {
            return Err(Error::Config("cell_size_xy must be positive".into()));
        }
        if !positive(self.excite_sigma_xy) || !positive(self.excite_sigma_theta) {
            return Err(Error::Config("excitation sigmas must be positive".into()));
        }
        if !(self.inhibit_amount >= 0.0 && self.inhibit_amount.is_finite()) {
            return Err(Error::Config("inhibit_amount must be non-negative".into()));
        }
        if !positive(self.injection_energy) {
            return Err(Error::Config("injection_energy must be positive".into()));
        }
        Ok(())
    }

    pub fn cell_size_theta(&self) -> f64 {
        TAU / self.ntheta as f64
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.ntheta]
    }
}

/// Integer cell coordinates `(ix, iy, iθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellCoords {
    pub x: usize,
    pub y: usize,
    pub theta: usize,
}

impl CellCoords {
    pub fn new(x: usize, y: usize, theta: usize) -> Self {
        Self { x, y, theta }
    }

    /// Largest per-axis distance on the torus (wrapped Chebyshev distance).
    pub fn wrapped_distance(&self, other: &CellCoords, dims: [usize; 3]) -> usize {
        let d = |a: usize, b: usize, n: usize| {
            let diff = a.abs_diff(b) % n;
            diff.min(n - diff)
        };
        d(self.x, other.x, dims[0])
            .max(d(self.y, other.y, dims[1]))
            .max(d(self.theta, other.theta, dims[2]))
    }
}

/// Decoded pose plus the peak cell it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedPose {
    pub pose: Pose2D,
    pub coords: CellCoords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCellGrid {
    nx: usize,
    ny: usize,
    ntheta: usize,
    cell_size_xy: f64,
    activity: Vec<f64>,
}

impl PoseCellGrid {
    pub fn uniform(cfg: &CanConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.nx * cfg.ny * cfg.ntheta;
        Ok(Self {
            nx: cfg.nx,
            ny: cfg.ny,
            ntheta: cfg.ntheta,
            cell_size_xy: cfg.cell_size_xy,
            activity: vec![1.0 / n as f64; n],
        })
    }

    /// All activity in one cell.
    pub fn spike(cfg: &CanConfig, at: CellCoords) -> Result<Self> {
        let mut g = Self::uniform(cfg)?;
        let i = g.index_checked(at)?;
        g.activity.iter_mut().for_each(|a| *a = 0.0);
        g.activity[i] = 1.0;
        Ok(g)
    }

    /// Builds a grid from raw activity, normalising it to unit total.
    pub fn from_activity(cfg: &CanConfig, activity: Vec<f64>) -> Result<Self> {
        let mut g = Self::uniform(cfg)?;
        crate::error::check_dim("pose-cell activity", g.activity.len(), activity.len())?;
        if activity.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::OutOfRange(
                "pose-cell activity must be finite and non-negative".into(),
            ));
        }
        g.activity = activity;
        g.normalize()?;
        Ok(g)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.ntheta]
    }

    pub fn activity(&self) -> &[f64] {
        &self.activity
    }

    pub fn at(&self, c: CellCoords) -> f64 {
        self.activity[self.index(c)]
    }

    pub fn total(&self) -> f64 {
        self.activity.iter().sum()
    }

    fn index(&self, c: CellCoords) -> usize {
        (c.theta * self.ny + c.y) * self.nx + c.x
    }

    fn index_checked(&self, c: CellCoords) -> Result<usize> {
        if c.x >= self.nx || c.y >= self.ny || c.theta >= self.ntheta {
            return Err(Error::OutOfRange(format!(
                "cell ({}, {}, {}) outside {}x{}x{} grid",
                c.x, c.y, c.theta, self.nx, self.ny, self.ntheta
            )));
        }
        Ok(self.index(c))
    }

    pub fn coords_of(&self, index: usize) -> CellCoords {
        CellCoords {
            x: index % self.nx,
            y: (index / self.nx) % self.ny,
            theta: index / (self.nx * self.ny),
        }
    }

    fn check_config(&self, cfg: &CanConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.dims() != self.dims() {
            return Err(Error::Config(format!(
                "config dimensions {:?} do not match grid {:?}",
                cfg.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate("pose-cell activity is all zero"));
        }
        self.activity.iter_mut().for_each(|a| *a /= total);
        Ok(())
    }

    /// Wrapped Gaussian excitation, global inhibition, rectification and
    /// divisive normalisation.
    pub fn iterate(&self, cfg: &CanConfig) -> Result<Self> {
        self.check_config(cfg)?;
        let kx = wrapped_kernel(self.nx, cfg.excite_sigma_xy);
        let ky = wrapped_kernel(self.ny, cfg.excite_sigma_xy);
        let kt = wrapped_kernel(self.ntheta, cfg.excite_sigma_theta);
        let mut a = self.activity.clone();
        let mut tmp = vec![0.0; a.len()];
        convolve_axis(&a, &mut tmp, self.dims(), 0, &kx);
        convolve_axis(&tmp, &mut a, self.dims(), 1, &ky);
        convolve_axis(&a, &mut tmp, self.dims(), 2, &kt);
        for v in &mut tmp {
            *v = (*v - cfg.inhibit_amount).max(0.0);
        }
        let mut out = Self {
            activity: tmp,
            ..self.clone()
        };
        out.normalize()?;
        Ok(out)
    }

    /// Shifts activity by the odometry step. The body-frame translation is
    /// rotated by the currently decoded heading first.
    pub fn path_integrate(&self, delta: &OdometryDelta, cfg: &CanConfig) -> Result<Self> {
        self.check_config(cfg)?;
        delta.validate()?;
        if delta.dx == 0.0 && delta.dy == 0.0 && delta.dtheta == 0.0 {
            return Ok(self.clone());
        }
        let theta = self.decode()?.pose.theta;
        let (s, c) = theta.sin_cos();
        let gx = c * delta.dx - s * delta.dy;
        let gy = s * delta.dx + c * delta.dy;
        self.shifted([
            gx / cfg.cell_size_xy,
            gy / cfg.cell_size_xy,
            delta.dtheta / cfg.cell_size_theta(),
        ])
    }

    /// Translates activity by a (possibly fractional) number of cells per
    /// axis using linear interpolation, wrapping at the edges.
    pub fn shifted(&self, cells: [f64; 3]) -> Result<Self> {
        if cells.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("pose-cell shift"));
        }
        let mut a = self.activity.clone();
        let mut tmp = vec![0.0; a.len()];
        for (axis, &s) in cells.iter().enumerate() {
            if s != 0.0 {
                shift_axis(&a, &mut tmp, self.dims(), axis, s);
                std::mem::swap(&mut a, &mut tmp);
            }
        }
        Ok(Self {
            activity: a,
            ..self.clone()
        })
    }

    pub fn inject(&self, at: CellCoords, energy: f64, cfg: &CanConfig) -> Result<Self> {
        self.check_config(cfg)?;
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "injection energy must be positive, got {energy}"
            )));
        }
        let i = self.index_checked(at)?;
        let mut out = self.clone();
        out.activity[i] += energy;
        out.normalize()?;
        Ok(out)
    }

    /// Peak cell refined by the activity-weighted centroid of offsets in its
    /// wrapped neighbourhood (radius 3, less on very small axes).
    pub fn decode(&self) -> Result<DecodedPose> {
        let mut best = 0;
        for (i, &a) in self.activity.iter().enumerate() {
            if a > self.activity[best] {
                best = i;
            }
        }
        if !(self.activity[best] > 0.0) {
            return Err(Error::Degenerate("pose-cell activity is all zero"));
        }
        let peak = self.coords_of(best);
        let r = |n: usize| 3.min((n - 1) / 2) as i64;
        let (rx, ry, rt) = (r(self.nx), r(self.ny), r(self.ntheta));
        let wrapi = |c: usize, d: i64, n: usize| (c as i64 + d).rem_euclid(n as i64) as usize;
        let (mut sw, mut sx, mut sy, mut st) = (0.0, 0.0, 0.0, 0.0);
        for dt in -rt..=rt {
            for dy in -ry..=ry {
                for dx in -rx..=rx {
                    let c = CellCoords {
                        x: wrapi(peak.x, dx, self.nx),
                        y: wrapi(peak.y, dy, self.ny),
                        theta: wrapi(peak.theta, dt, self.ntheta),
                    };
                    let a = self.at(c);
                    sw += a;
                    sx += a * dx as f64;
                    sy += a * dy as f64;
                    st += a * dt as f64;
                }
            }
        }
        let fx = peak.x as f64 + sx / sw;
        let fy = peak.y as f64 + sy / sw;
        let ft = peak.theta as f64 + st / sw;
        let span_x = self.nx as f64 * self.cell_size_xy;
        let span_y = self.ny as f64 * self.cell_size_xy;
        let pose = Pose2D::new(
            (fx * self.cell_size_xy).rem_euclid(span_x),
            (fy * self.cell_size_xy).rem_euclid(span_y),
            wrap_angle(ft * TAU / self.ntheta as f64)?,
        );
        Ok(DecodedPose { pose, coords: peak })
    }
}

/// Normalised Gaussian taps folded onto a ring of `n` cells, truncated at
/// `ceil(3σ)` cells each side.
pub fn wrapped_kernel(n: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k = vec![0.0; n];
    for d in -radius..=radius {
        let w = (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        k[d.rem_euclid(n as i64) as usize] += w;
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

fn axis_stride(dims: [usize; 3], axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, dims[0]),
        1 => (dims[0], dims[1]),
        _ => (dims[0] * dims[1], dims[2]),
    }
}

/// `dst[.., i, ..] = Σ_d k[d] · src[.., i - d, ..]` along one axis.
fn convolve_axis(src: &[f64], dst: &mut [f64], dims: [usize; 3], axis: usize, k: &[f64]) {
    let (stride, n) = axis_stride(dims, axis);
    let taps: Vec<(usize, f64)> = k
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(d, w)| (d, *w))
        .collect();
    dst.iter_mut().for_each(|v| *v = 0.0);
    for base in 0..src.len() {
        if (base / stride) % n != 0 {
            continue;
        }
        for i in 0..n {
            let v = src[base + i * stride];
            if v == 0.0 {
                continue;
            }
            for &(d, w) in &taps {
                let j = (i + d) % n;
                dst[base + j * stride] += w * v;
            }
        }
    }
}

fn shift_axis(src: &[f64], dst: &mut [f64], dims: [usize; 3], axis: usize, shift: f64) {
    let (stride, n) = axis_stride(dims, axis);
    let whole = shift.floor();
    let frac = shift - whole;
    let k = (whole as i64).rem_euclid(n as i64) as usize;
    dst.iter_mut().for_each(|v| *v = 0.0);
    for base in 0..src.len() {
        if (base / stride) % n != 0 {
            continue;
        }
        for i in 0..n {
            let v = src[base + i * stride];
            let j = (i + k) % n;
            if frac == 0.0 {
                dst[base + j * stride] += v;
            } else {
                dst[base + j * stride] += (1.0 - frac) * v;
                dst[base + ((j + 1) % n) * stride] += frac * v;
            }
        }
    }
}
