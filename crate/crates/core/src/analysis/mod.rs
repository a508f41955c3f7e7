//! Closed-form evaluators and stability analysers.

mod asymptotic;
mod drift;
mod lemma1;
mod roundrobin;
mod theorem2;

pub use asymptotic::{asymptotic_da_variance, reduced_block, reduced_block_inverse};
pub use drift::{drift_matrix, drift_stable, DriftVerdict};
pub use lemma1::{
    corollary1_limit, lemma1_mean, lemma1_mean_recurrence, lemma1_mse, lemma1_variance,
    lemma1_variance_recurrence, mse_grid, sync_stability, Horizon, Lemma1Params, MseCell, MseGridSpec, Roots,
    SyncStability,
};
pub use roundrobin::{
    admm_cycle_dense, build_admm_maps, build_easgd_maps, easgd_alpha_bound, easgd_closed_form_stable, stability_grid, AdmmMaps,
    EasgdMaps, GridKind, StabilityGrid,
};
pub use theorem2::{theorem2_bound, theorem2_fixed_point, theorem2_recursion, theorem2_trajectory, Theorem2Params};

use crate::error::{Error, Result};

/// Spectral radii within this distance of one are treated as boundary cells.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Relative tolerance for spectral radius estimates in the analysers.
pub const RADIUS_TOL: f64 = 1e-12;

/// `count` grid points over `(lo, hi]`: `lo + (hi − lo)(i + 1)/count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("resolution", "must be at least 1"));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::param("range", format!("need finite lo < hi, got ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * (i + 1) as f64 / self.count as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }
}
