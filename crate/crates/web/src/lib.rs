//! Browser bindings: round-robin stability heatmaps, theoretical MSE curves
//! and a small synchronous EASGD run on the scalar quadratic.
//!
//! Every export wraps a plain function returning `Result<_, String>` so the
//! numerics are testable off the browser.

use elastica_core::analysis::{
    lemma1_mse, stability_grid, sync_stability, Axis, GridKind, Horizon, Lemma1Params,
};
use elastica_core::harness::{run_replicas, Method, SimulationConfig};
use elastica_core::problems::QuadraticProblem;
use wasm_bindgen::prelude::*;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Spectral radius of the full round-robin cycle, row-major with `η` outer.
pub fn heatmap(kind: &str, p: usize, eta_max: f64, second_max: f64, resolution: usize) -> Result<Vec<f64>, String> {
    let kind = match kind {
        "admm" => GridKind::Admm,
        "easgd" => GridKind::Easgd,
        other => return Err(format!("unknown grid kind `{other}`")),
    };
    if resolution > 200 {
        return Err("resolution is capped at 200 in the browser".into());
    }
    let grid = stability_grid(
        kind,
        p,
        Axis::new(0.0, eta_max, resolution).map_err(err)?,
        Axis::new(0.0, second_max, resolution).map_err(err)?,
    )
    .map_err(err)?;
    Ok(grid.values)
}

/// `E(x̃_t − x*)²` for `t = 0..=t_max`, then the stationary value
/// (`inf` when the parameters are unstable).
pub fn mse_series(p: usize, eta: f64, beta: f64, sigma: f64, x0: f64, t_max: u64) -> Result<Vec<f64>, String> {
    let params = Lemma1Params::uniform(1.0, sigma * sigma, p, eta, beta, x0).map_err(err)?;
    let mut out = Vec::with_capacity(t_max as usize + 2);
    for t in 0..=t_max {
        out.push(lemma1_mse(&params, Horizon::Step(t)).map_err(err)?);
    }
    let stationary = if sync_stability(&params).stable {
        lemma1_mse(&params, Horizon::Infinity).map_err(err)?
    } else {
        f64::INFINITY
    };
    out.push(stationary);
    Ok(out)
}

/// Replica-mean squared center error of synchronous EASGD on `x²/2`, one
/// value per step.
pub fn easgd_run(
    p: usize,
    eta: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
    steps: u64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if steps > 20_000 || replicas > 2_000 {
        return Err("at most 20000 steps and 2000 replicas in the browser".into());
    }
    let problem = QuadraticProblem::scalar(1.0, 0.0, sigma * sigma).map_err(err)?;
    let mut cfg = SimulationConfig::new(Method::Easgd, problem.into(), eta);
    cfg.p = p;
    cfg.alpha = beta / p as f64;
    cfg.x0 = vec![x0];
    cfg.steps = steps;
    cfg.replicas = replicas;
    cfg.seed = seed;
    let traj = run_replicas(&cfg).map_err(err)?;
    Ok(traj.aggregate.iter().map(|r| r.center_err.mean).collect())
}

#[wasm_bindgen]
pub fn stability_heatmap(
    kind: &str,
    p: usize,
    eta_max: f64,
    second_max: f64,
    resolution: usize,
) -> Result<Vec<f64>, JsError> {
    heatmap(kind, p, eta_max, second_max, resolution).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mse_curve(p: usize, eta: f64, beta: f64, sigma: f64, x0: f64, t_max: u32) -> Result<Vec<f64>, JsError> {
    mse_series(p, eta, beta, sigma, x0, u64::from(t_max)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_easgd(
    p: usize,
    eta: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
    steps: u32,
    replicas: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    easgd_run(p, eta, beta, sigma, x0, u64::from(steps), replicas, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_shape_and_instability() {
        let values = heatmap("admm", 3, 0.01, 10.0, 8).unwrap();
        assert_eq!(values.len(), 64);
        assert!(values.iter().any(|v| *v > 1.0));
        assert!(heatmap("lasso", 3, 1.0, 1.0, 4).is_err());
        assert!(heatmap("easgd", 2, -1.0, 1.0, 4).is_err());
    }

    #[test]
    fn mse_series_starts_at_bias_and_ends_stationary() {
        let s = mse_series(4, 0.1, 0.5, 1.0, 2.0, 400).unwrap();
        assert_eq!(s.len(), 402);
        assert_eq!(s[0], 4.0);
        assert!((s[400] - s[401]).abs() < 1e-6 * s[401]);
        let unstable = mse_series(4, 2.4, 2.4, 1.0, 1.0, 3).unwrap();
        assert!(unstable.last().unwrap().is_infinite());
    }

    #[test]
    fn simulation_tracks_theory() {
        let sim = easgd_run(4, 0.1, 0.5, 0.0, 1.0, 30, 1, 0).unwrap();
        let theory = mse_series(4, 0.1, 0.5, 0.0, 1.0, 30).unwrap();
        for (a, b) in sim.iter().zip(&theory) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
        assert!(easgd_run(4, 0.1, 0.5, 1.0, 1.0, 50_000, 1, 0).is_err());
    }
}
