//! Drift matrix of the noiseless synchronous update on the scalar quadratic.

use super::lemma1::{sync_stability, Lemma1Params};
use super::RADIUS_TOL;
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};

/// `(p+1)×(p+1)` map of `(x¹ … xᵖ, x̃)`: worker diagonal `1 − α − ηh`, last
/// row and column `α`, corner `1 − pα`.
pub fn drift_matrix(eta_h: f64, alpha: f64, p: usize) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::param("p", "need at least one worker"));
    }
    if !(eta_h.is_finite() && alpha.is_finite()) {
        return Err(Error::param("eta_h/alpha", "must be finite"));
    }
    let n = p + 1;
    let mut m = Matrix::zeros(n, n);
    for i in 0..p {
        m[(i, i)] = 1.0 - alpha - eta_h;
        m[(i, p)] = alpha;
        m[(p, i)] = alpha;
    }
    m[(p, p)] = 1.0 - p as f64 * alpha;
    Ok(m)
}

/// Inequality verdict next to the numerically measured spectral radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftVerdict {
    pub lemma_stable: bool,
    pub spectral_radius: f64,
    pub numeric_stable: bool,
}

pub fn drift_stable(eta_h: f64, alpha: f64, p: usize) -> Result<DriftVerdict> {
    let m = drift_matrix(eta_h, alpha, p)?;
    let radius = spectral_radius(&m, RADIUS_TOL)?.value;
    let params = Lemma1Params::new(1.0, 0.0, p, eta_h, alpha, 0.0, vec![0.0; p])?;
    Ok(DriftVerdict {
        lemma_stable: sync_stability(&params).stable,
        spectral_radius: radius,
        numeric_stable: radius < 1.0,
    })
}
