//! Subcommand bodies, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use elastica_core::analysis::{mse_grid, stability_grid, Axis, GridKind, Horizon, MseGridSpec, StabilityGrid};
use elastica_core::distributed::ElasticParams;
use elastica_core::harness::{run_replicas, Method, Trajectory};

use crate::config::{ExperimentConfig, ValidateSpec};
use crate::output::{mse_csv, stability_grid_csv, trajectory_csv, write_bundle, Meta};
use crate::validate::{run_scenario, Check};
use crate::CliError;

pub const DEFAULT_TRAJECTORY_PATH: &str = "trajectory.csv";

pub fn read_config_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Runs every replica and renders the trajectory table.
pub fn simulate_csv(cfg: &ExperimentConfig) -> Result<(String, Trajectory), CliError> {
    let traj = run_replicas(&cfg.to_simulation()?)?;
    Ok((trajectory_csv(&traj), traj))
}

/// Derived rates recorded next to a run.
pub fn rate_meta(cfg: &ExperimentConfig, meta: &mut Meta) -> Result<(), CliError> {
    if cfg.method.is_elastic() {
        let alpha = cfg.alpha.expect("elastic methods resolve alpha");
        let params = ElasticParams::from_alpha(cfg.eta, alpha, cfg.p, cfg.tau, cfg.delta)?;
        meta.set_num("alpha", params.alpha())
            .set_num("beta", params.beta())
            .set_num("rho", params.rho())
            .set_num("rho_effective", params.rho_effective());
    } else if cfg.method == Method::AdmmRr {
        let alpha = cfg.alpha.expect("admm-rr resolves alpha");
        meta.set_num("alpha", alpha).set_num("rho", alpha / cfg.eta);
    } else if let Some(rate) = cfg.alpha {
        meta.set_num("average_rate", rate);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutcome {
    pub csv_path: PathBuf,
    pub rows: usize,
    pub replicas: usize,
    pub diverged: usize,
}

/// Writes the trajectory CSV and its sidecar; errors with
/// [`CliError::AllDiverged`] only after both are on disk.
pub fn simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SimulateOutcome, CliError> {
    let csv_path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_TRAJECTORY_PATH));
    let started = Instant::now();
    let (csv, traj) = simulate_csv(cfg)?;
    let diverged = traj.diverged_replicas();
    let mut meta = Meta::new();
    meta.set("command", "simulate");
    rate_meta(cfg, &mut meta)?;
    meta.set("rows", traj.aggregate.len())
        .set("replicas_diverged", diverged)
        .set("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    write_bundle(&csv_path, &csv, &meta, &cfg.to_text())?;
    if traj.all_diverged() {
        return Err(CliError::AllDiverged(traj.replicas.len()));
    }
    Ok(SimulateOutcome {
        csv_path,
        rows: traj.aggregate.len(),
        replicas: traj.replicas.len(),
        diverged,
    })
}

/// `lo:hi` read as the half-open range `(lo, hi]`.
pub fn parse_range(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::usage(format!("--{flag}: expected `lo:hi` with lo < hi, found `{text}`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRequest {
    pub kind: GridKind,
    pub p: usize,
    pub eta_range: (f64, f64),
    pub second_range: (f64, f64),
    pub resolution: usize,
}

impl GridRequest {
    /// Axes of the round-robin stability figures.
    pub fn defaults(kind: GridKind, p: usize) -> Self {
        let (eta_range, second_range) = match kind {
            GridKind::Admm => ((0.0, 0.01), (0.0, 10.0)),
            GridKind::Easgd => ((0.0, 2.2), (0.0, 1.1)),
        };
        Self {
            kind,
            p,
            eta_range,
            second_range,
            resolution: 100,
        }
    }

    pub fn compute(&self) -> Result<StabilityGrid, CliError> {
        if self.p == 0 {
            return Err(CliError::usage("--p must be at least 1"));
        }
        let axis = |(lo, hi): (f64, f64)| Axis::new(lo, hi, self.resolution).map_err(|e| CliError::usage(e.to_string()));
        Ok(stability_grid(self.kind, self.p, axis(self.eta_range)?, axis(self.second_range)?)?)
    }
}

pub fn parse_grid_kind(text: &str) -> Result<GridKind, CliError> {
    match text {
        "admm" => Ok(GridKind::Admm),
        "easgd" => Ok(GridKind::Easgd),
        other => Err(CliError::usage(format!("--kind must be admm or easgd, found `{other}`"))),
    }
}

pub fn write_stability_grid(req: &GridRequest, out: &Path) -> Result<StabilityGrid, CliError> {
    let started = Instant::now();
    let grid = req.compute()?;
    let mut meta = Meta::new();
    meta.set("command", "stability-grid")
        .set("kind", req.kind.name())
        .set("p", req.p)
        .set("eta_range", format!("({:?}, {:?}]", req.eta_range.0, req.eta_range.1))
        .set(
            &format!("{}_range", req.kind.second_axis_name()),
            format!("({:?}, {:?}]", req.second_range.0, req.second_range.1),
        )
        .set("resolution", req.resolution)
        .set("unstable_cells", grid.unstable_count())
        .set_num("max_spectral_radius", grid.max_value())
        .set("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    write_bundle(out, &stability_grid_csv(&grid), &meta, "")?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRequest {
    pub h: f64,
    pub sigma: f64,
    pub x0: f64,
    pub p_list: Vec<usize>,
    pub horizons: Vec<Horizon>,
    pub eta_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub resolution: usize,
}

impl Default for MseRequest {
    fn default() -> Self {
        Self {
            h: 1.0,
            sigma: 10.0,
            x0: 1.0,
            p_list: vec![1, 10, 100, 1000, 10_000],
            horizons: vec![
                Horizon::Step(1),
                Horizon::Step(2),
                Horizon::Step(10),
                Horizon::Step(100),
                Horizon::Infinity,
            ],
            eta_range: (0.0, 2.5),
            beta_range: (0.0, 2.5),
            resolution: 50,
        }
    }
}

pub fn parse_horizons(text: &str) -> Result<Vec<Horizon>, CliError> {
    text.split(',')
        .map(|t| match t.trim() {
            "inf" | "infinity" => Ok(Horizon::Infinity),
            s => s
                .parse()
                .map(Horizon::Step)
                .map_err(|_| CliError::usage(format!("--t: expected integers or `inf`, found `{s}`"))),
        })
        .collect()
}

pub fn parse_p_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(p) if p > 0 => Ok(p),
            _ => Err(CliError::usage(format!("--p: expected positive integers, found `{s}`"))),
        })
        .collect()
}

impl MseRequest {
    pub fn spec(&self) -> Result<MseGridSpec, CliError> {
        if self.p_list.is_empty() || self.horizons.is_empty() {
            return Err(CliError::usage("need at least one p and one t"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CliError::usage("--sigma must be a non-negative number"));
        }
        let axis = |(lo, hi): (f64, f64)| Axis::new(lo, hi, self.resolution).map_err(|e| CliError::usage(e.to_string()));
        Ok(MseGridSpec {
            h: self.h,
            sigma2: self.sigma * self.sigma,
            x0: self.x0,
            p_list: self.p_list.clone(),
            horizons: self.horizons.clone(),
            eta_axis: axis(self.eta_range)?,
            beta_axis: axis(self.beta_range)?,
        })
    }
}

pub fn write_mse_theory(req: &MseRequest, out: &Path) -> Result<usize, CliError> {
    let started = Instant::now();
    let cells = mse_grid(&req.spec()?)?;
    let list = |v: Vec<String>| v.join(",");
    let mut meta = Meta::new();
    meta.set("command", "mse-theory")
        .set_num("h", req.h)
        .set_num("sigma", req.sigma)
        .set_num("x0", req.x0)
        .set("p", list(req.p_list.iter().map(|p| p.to_string()).collect()))
        .set("t", list(req.horizons.iter().map(|h| crate::output::horizon_label(*h)).collect()))
        .set("eta_range", format!("({:?}, {:?}]", req.eta_range.0, req.eta_range.1))
        .set("beta_range", format!("({:?}, {:?}]", req.beta_range.0, req.beta_range.1))
        .set("resolution", req.resolution)
        .set("diverged_cells", cells.iter().filter(|c| c.diverged).count())
        .set("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    write_bundle(out, &mse_csv(&cells), &meta, "")?;
    Ok(cells.len())
}

/// Runs the requested scenario(s); the caller prints the lines.
pub fn validate(spec: &ValidateSpec) -> Result<Vec<Check>, CliError> {
    run_scenario(&spec.scenario, spec)
}
