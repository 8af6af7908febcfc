//! Central finite-difference check of [`grad_free_energy`].
//!
//! The objective is piecewise smooth (rectifiers), so a stencil of width `2h`
//! can straddle a kink. Such coordinates are re-examined with a step 100×
//! smaller; they are counted separately and must agree at the smaller step.

use super::model::ModelParams;
use super::objective::{free_energy, grad_free_energy, Episode};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    /// Worst relative error over coordinates whose stencil is smooth.
    pub max_rel_error: f64,
    /// Coordinates whose `h` stencil crosses a kink.
    pub kinks: usize,
    /// Worst relative error of the kink coordinates at `h / 100`.
    pub kink_max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol && self.kink_max_rel_error < tol
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn gradient_check(
    params: &ModelParams,
    batch: &[Episode],
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let g = grad_free_energy(batch, params, seed)?;
    let mut q = params.clone();
    let mut central = |i: usize, h: f64| -> Result<f64> {
        let v = params.values()[i];
        q.values_mut()[i] = v + h;
        let up = free_energy(batch, &q, seed)?;
        q.values_mut()[i] = v - h;
        let down = free_energy(batch, &q, seed)?;
        q.values_mut()[i] = v;
        Ok((up - down) / (2.0 * h))
    };
    let mut report = GradCheckReport {
        coordinates: params.len(),
        max_rel_error: 0.0,
        kinks: 0,
        kink_max_rel_error: 0.0,
    };
    for i in 0..params.len() {
        let a = g.values[i];
        let rel = relative_error(a, central(i, h)?);
        if rel < tol {
            report.max_rel_error = report.max_rel_error.max(rel);
            continue;
        }
        let fine = relative_error(a, central(i, h / 100.0)?);
        if fine < rel / 10.0 {
            report.kinks += 1;
            report.kink_max_rel_error = report.kink_max_rel_error.max(fine);
        } else {
            report.max_rel_error = report.max_rel_error.max(rel);
        }
    }
    Ok(report)
}
