//! Linear maps of the round-robin ADMM and EASGD schemes on `F(x) = x²/2`
//! and spectral-radius sweeps over their full cycles.

use super::{Axis, BOUNDARY_TOL, RADIUS_TOL};
use crate::error::{Error, Result};
use crate::linalg::{mat_mul, spectral_radius, Matrix};

/// Per-worker factors `[F₁, F₂, F₃]`, their compositions `F₃F₂F₁`, and the
/// full cycle `Fᵖ₃Fᵖ₂Fᵖ₁ ⋯ F¹₃F¹₂F¹₁`, over `(λ¹, x¹, …, λᵖ, xᵖ, x̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmMaps {
    pub factors: Vec<[Matrix; 3]>,
    pub per_worker: Vec<Matrix>,
    pub cycle: Matrix,
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::param("p", "need at least one worker"));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param(name, "must be positive and finite"));
    }
    Ok(())
}

/// Replaces row `dst` of `m` by `Σ wₖ · row(srcₖ)` read before the update.
fn combine_rows(m: &mut Matrix, dst: usize, terms: &[(usize, f64)]) {
    let mut row = vec![0.0; m.cols()];
    for &(src, w) in terms {
        for (r, v) in row.iter_mut().zip(m.row(src)) {
            *r += w * v;
        }
    }
    m.row_mut(dst).copy_from_slice(&row);
}

fn admm_rows(p: usize, eta: f64, rho: f64, i: usize) -> [Vec<(usize, f64)>; 3] {
    let (lam, x, c) = (2 * i, 2 * i + 1, 2 * p);
    let er = eta * rho;
    let denom = 1.0 + er;
    let center = (0..p)
        .flat_map(|j| [(2 * j, -1.0 / p as f64), (2 * j + 1, 1.0 / p as f64)])
        .collect();
    [
        vec![(lam, 1.0), (x, -1.0), (c, 1.0)],
        vec![(lam, er / denom), (x, (1.0 - eta) / denom), (c, er / denom)],
        center,
    ]
}

fn admm_factor(p: usize, eta: f64, rho: f64, i: usize, k: usize) -> Matrix {
    let n = 2 * p + 1;
    let mut f = Matrix::identity(n);
    let dst = [2 * i, 2 * i + 1, 2 * p][k];
    let row = &admm_rows(p, eta, rho, i)[k];
    f.row_mut(dst).fill(0.0);
    for &(col, w) in row {
        f[(dst, col)] += w;
    }
    f
}

pub fn build_admm_maps(p: usize, eta: f64, rho: f64) -> Result<AdmmMaps> {
    check_p(p)?;
    check_positive("eta", eta)?;
    check_positive("rho", rho)?;
    let n = 2 * p + 1;
    let mut factors = Vec::with_capacity(p);
    let mut per_worker = Vec::with_capacity(p);
    let mut cycle = Matrix::identity(n);
    for i in 0..p {
        let rows = admm_rows(p, eta, rho, i);
        let dsts = [2 * i, 2 * i + 1, 2 * p];
        let mut composed = Matrix::identity(n);
        for k in 0..3 {
            combine_rows(&mut composed, dsts[k], &rows[k]);
            combine_rows(&mut cycle, dsts[k], &rows[k]);
        }
        factors.push([0, 1, 2].map(|k| admm_factor(p, eta, rho, i, k)));
        per_worker.push(composed);
    }
    Ok(AdmmMaps {
        factors,
        per_worker,
        cycle,
    })
}

/// Per-worker maps `Fⁱ`, the full cycle `Fᵖ ⋯ F¹` over `(x¹, …, xᵖ, x̃)`,
/// the closed-form verdict and the cycle's spectral radius.
#[derive(Debug, Clone, PartialEq)]
pub struct EasgdMaps {
    pub per_worker: Vec<Matrix>,
    pub cycle: Matrix,
    pub closed_form_stable: bool,
    pub spectral_radius: f64,
}

impl EasgdMaps {
    /// Radius within the boundary tolerance of one counts as stable.
    pub fn numeric_stable(&self) -> bool {
        self.spectral_radius <= 1.0 + BOUNDARY_TOL
    }

    pub fn on_boundary(&self) -> bool {
        (self.spectral_radius - 1.0).abs() <= BOUNDARY_TOL
    }
}

/// Largest `α` allowed at step `η`: `(4 − 2η)/(4 − η)`.
pub fn easgd_alpha_bound(eta: f64) -> f64 {
    (4.0 - 2.0 * eta) / (4.0 - eta)
}

/// `0 ≤ η ≤ 2` and `0 ≤ α ≤ (4 − 2η)/(4 − η)`.
pub fn easgd_closed_form_stable(eta: f64, alpha: f64) -> bool {
    (0.0..=2.0).contains(&eta) && alpha >= 0.0 && alpha <= easgd_alpha_bound(eta)
}

fn easgd_rows(p: usize, eta: f64, alpha: f64, i: usize) -> [(usize, Vec<(usize, f64)>); 2] {
    [
        (i, vec![(i, 1.0 - eta - alpha), (p, alpha)]),
        (p, vec![(i, alpha), (p, 1.0 - alpha)]),
    ]
}

/// Applies both rows of `Fⁱ` simultaneously to the rows of `m`.
fn apply_easgd(m: &mut Matrix, p: usize, eta: f64, alpha: f64, i: usize) {
    let [(di, wi), (dc, wc)] = easgd_rows(p, eta, alpha, i);
    let old = m.clone();
    for (dst, terms) in [(di, wi), (dc, wc)] {
        let mut row = vec![0.0; m.cols()];
        for (src, w) in terms {
            for (r, v) in row.iter_mut().zip(old.row(src)) {
                *r += w * v;
            }
        }
        m.row_mut(dst).copy_from_slice(&row);
    }
}

pub fn build_easgd_maps(p: usize, eta: f64, alpha: f64) -> Result<EasgdMaps> {
    check_p(p)?;
    if !(eta.is_finite() && alpha.is_finite()) {
        return Err(Error::param("eta/alpha", "must be finite"));
    }
    let n = p + 1;
    let mut per_worker = Vec::with_capacity(p);
    let mut cycle = Matrix::identity(n);
    for i in 0..p {
        let mut f = Matrix::identity(n);
        apply_easgd(&mut f, p, eta, alpha, i);
        apply_easgd(&mut cycle, p, eta, alpha, i);
        per_worker.push(f);
    }
    let radius = spectral_radius(&cycle, RADIUS_TOL)?.value;
    Ok(EasgdMaps {
        per_worker,
        cycle,
        closed_form_stable: easgd_closed_form_stable(eta, alpha),
        spectral_radius: radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Second axis is the penalty `ρ`.
    Admm,
    /// Second axis is the moving rate `α` (`= ηρ`).
    Easgd,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Admm => "admm",
            GridKind::Easgd => "easgd",
        }
    }

    pub fn second_axis_name(self) -> &'static str {
        match self {
            GridKind::Admm => "rho",
            GridKind::Easgd => "alpha",
        }
    }
}

/// Full-cycle spectral radius over an `η` × second-axis grid, row-major with
/// `η` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid {
    pub kind: GridKind,
    pub p: usize,
    pub eta_axis: Axis,
    pub second_axis: Axis,
    pub values: Vec<f64>,
    /// Closed-form verdicts for the EASGD kind.
    pub closed_form: Option<Vec<bool>>,
}

impl StabilityGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.second_axis.count + j]
    }

    /// Cells with radius above `1 + BOUNDARY_TOL`.
    pub fn unstable_count(&self) -> usize {
        self.values.iter().filter(|v| **v > 1.0 + BOUNDARY_TOL).count()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn cell(kind: GridKind, p: usize, eta: f64, second: f64) -> Result<(f64, bool)> {
    match kind {
        GridKind::Admm => {
            let maps = build_admm_maps(p, eta, second)?;
            Ok((spectral_radius(&maps.cycle, RADIUS_TOL)?.value, false))
        }
        GridKind::Easgd => {
            let maps = build_easgd_maps(p, eta, second)?;
            Ok((maps.spectral_radius, maps.closed_form_stable))
        }
    }
}

fn grid_row(kind: GridKind, p: usize, eta: f64, seconds: &[f64]) -> Result<Vec<(f64, bool)>> {
    seconds.iter().map(|&s| cell(kind, p, eta, s)).collect()
}

pub fn stability_grid(kind: GridKind, p: usize, eta_axis: Axis, second_axis: Axis) -> Result<StabilityGrid> {
    check_p(p)?;
    let etas = eta_axis.points();
    let seconds = second_axis.points();
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<Vec<(f64, bool)>>> = {
        use rayon::prelude::*;
        etas.par_iter().map(|&eta| grid_row(kind, p, eta, &seconds)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<Vec<(f64, bool)>>> = etas.iter().map(|&eta| grid_row(kind, p, eta, &seconds)).collect();

    let mut values = Vec::with_capacity(etas.len() * seconds.len());
    let mut closed = Vec::with_capacity(values.capacity());
    for row in rows {
        for (v, c) in row? {
            values.push(v);
            closed.push(c);
        }
    }
    Ok(StabilityGrid {
        kind,
        p,
        eta_axis,
        second_axis,
        values,
        closed_form: (kind == GridKind::Easgd).then_some(closed),
    })
}

/// Dense product of all `3p` factors, last factor leftmost.
pub fn admm_cycle_dense(maps: &AdmmMaps) -> Result<Matrix> {
    let n = maps.cycle.rows();
    let mut acc = Matrix::identity(n);
    for factors in &maps.factors {
        for f in factors {
            acc = mat_mul(f, &acc)?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_admm_roundrobin;

    #[test]
    fn admm_factors_match_printed_two_worker_matrices() {
        let (eta, rho) = (0.01, 2.0);
        let maps = build_admm_maps(2, eta, rho).unwrap();
        let [f1, f2, f3] = &maps.factors[0];
        let er = eta * rho;
        let mut e1 = Matrix::identity(5);
        e1.row_mut(0).copy_from_slice(&[1.0, -1.0, 0.0, 0.0, 1.0]);
        let mut e2 = Matrix::identity(5);
        e2.row_mut(1)
            .copy_from_slice(&[er / (1.0 + er), (1.0 - eta) / (1.0 + er), 0.0, 0.0, er / (1.0 + er)]);
        let mut e3 = Matrix::identity(5);
        e3.row_mut(4).copy_from_slice(&[-0.5, 0.5, -0.5, 0.5, 0.0]);
        assert_eq!(f1, &e1);
        assert_eq!(f2, &e2);
        assert_eq!(f3, &e3);
    }

    #[test]
    fn admm_cycle_equals_factor_product() {
        for p in [1, 2, 3, 8] {
            let maps = build_admm_maps(p, 0.003, 4.0).unwrap();
            let dense = admm_cycle_dense(&maps).unwrap();
            assert!(maps.cycle.max_abs_diff(&dense) < 1e-12, "p={p}");
            for (i, f) in maps.factors.iter().enumerate() {
                let composed = mat_mul(&f[2], &mat_mul(&f[1], &f[0]).unwrap()).unwrap();
                assert!(maps.per_worker[i].max_abs_diff(&composed) < 1e-12);
            }
        }
    }

    #[test]
    fn admm_cycle_matches_simulation() {
        for p in [2, 3, 8] {
            let (eta, rho) = (0.02, 1.5);
            let s0: Vec<f64> = (0..2 * p + 1).map(|k| 1.0 + 0.37 * k as f64 - 0.05 * (k * k) as f64).collect();
            let maps = build_admm_maps(p, eta, rho).unwrap();
            let predicted = maps.cycle.mat_vec(&s0).unwrap();
            let sim = run_admm_roundrobin(p, eta, rho, &s0, p as u64).unwrap();
            for (a, b) in predicted.iter().zip(&sim.final_state) {
                assert!((a - b).abs() < 1e-9, "p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn admm_chaotic_pick_is_unstable_for_three_workers() {
        let maps = build_admm_maps(3, 0.001, 2.5).unwrap();
        let r = spectral_radius(&maps.cycle, RADIUS_TOL).unwrap().value;
        assert!(r > 1.0 + BOUNDARY_TOL, "{r}");
    }

    #[test]
    fn admm_per_map_radius_near_one_for_tiny_eta() {
        let eta = 1e-8;
        for p in [2, 3, 8] {
            let maps = build_admm_maps(p, eta, 3.0).unwrap();
            for f in &maps.per_worker {
                let r = spectral_radius(f, RADIUS_TOL).unwrap().value;
                assert!(r <= 1.0 + 100.0 * eta, "p={p}: {r}");
            }
        }
    }

    #[test]
    fn easgd_maps_are_symmetric_with_printed_entries() {
        let maps = build_easgd_maps(2, 0.3, 0.2).unwrap();
        let expected = Matrix::from_rows(&[vec![0.5, 0.0, 0.2], vec![0.0, 1.0, 0.0], vec![0.2, 0.0, 0.8]]).unwrap();
        assert!(maps.per_worker[0].max_abs_diff(&expected) < 1e-15);
        for p in [2, 3, 8] {
            let maps = build_easgd_maps(p, 0.7, 0.45).unwrap();
            for f in &maps.per_worker {
                assert_eq!(f, &f.transpose());
            }
        }
    }

    #[test]
    fn easgd_cycle_equals_product() {
        let maps = build_easgd_maps(3, 0.4, 0.3).unwrap();
        let mut acc = Matrix::identity(4);
        for f in &maps.per_worker {
            acc = mat_mul(f, &acc).unwrap();
        }
        assert!(maps.cycle.max_abs_diff(&acc) < 1e-15);
    }

    #[test]
    fn alpha_bound_values() {
        assert_eq!(easgd_alpha_bound(2.0), 0.0);
        assert!((easgd_alpha_bound(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!(easgd_closed_form_stable(1.0, 0.6));
        assert!(!easgd_closed_form_stable(1.0, 0.7));
        assert!(!easgd_closed_form_stable(2.1, 0.0));
    }

    #[test]
    fn closed_form_region_is_numerically_stable() {
        // Inside the closed-form region every factor is a contraction in the
        // 2-norm, so the cycle cannot have radius above one.
        for p in [2, 3, 8] {
            for i in 1..=40 {
                for j in 1..=40 {
                    let eta = 2.0 * i as f64 / 40.0;
                    let alpha = easgd_alpha_bound(eta) * (j as f64 / 40.0);
                    let maps = build_easgd_maps(p, eta, alpha).unwrap();
                    assert!(maps.closed_form_stable);
                    assert!(maps.numeric_stable(), "p={p} eta={eta} alpha={alpha}: {}", maps.spectral_radius);
                }
            }
        }
    }

    #[test]
    fn single_cell_grid_equals_direct_call() {
        let axis_eta = Axis::new(0.0, 0.004, 1).unwrap();
        let axis_rho = Axis::new(0.0, 3.0, 1).unwrap();
        let grid = stability_grid(GridKind::Admm, 3, axis_eta, axis_rho).unwrap();
        let maps = build_admm_maps(3, 0.004, 3.0).unwrap();
        assert_eq!(grid.values, vec![spectral_radius(&maps.cycle, RADIUS_TOL).unwrap().value]);
        assert!(grid.closed_form.is_none());
    }

    #[test]
    fn admm_grid_has_unstable_region() {
        let grid = stability_grid(
            GridKind::Admm,
            3,
            Axis::new(0.0, 1e-2, 20).unwrap(),
            Axis::new(0.0, 10.0, 20).unwrap(),
        )
        .unwrap();
        assert!(grid.unstable_count() > 0);
        assert_eq!(grid.values.len(), 400);
        let direct = build_admm_maps(3, grid.eta_axis.point(4), grid.second_axis.point(7)).unwrap();
        let r = spectral_radius(&direct.cycle, RADIUS_TOL).unwrap().value;
        assert_eq!(grid.value(4, 7), r);
    }
}
