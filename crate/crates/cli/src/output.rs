//! CSV tables and `.meta` sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use elastica_core::analysis::{Horizon, MseCell, StabilityGrid};
use elastica_core::harness::Trajectory;

use crate::CliError;

/// Version of the CSV layout, sidecar keys and validate report lines.
pub const FORMAT_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "step,replica_mean_center_err,replica_var_center_err,mean_local_err,spatial_avg_err,double_avg_err,objective,diverged_flag";

/// 17 significant digits; `nan` and `inf` spelled as such.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

/// One row per recorded tick; rows stop where the last replica diverged.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * (traj.aggregate.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in &traj.aggregate {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            rec.step,
            fmt_num(rec.center_err.mean),
            fmt_num(rec.center_err.var),
            fmt_num(rec.local_err.mean),
            fmt_num(rec.spatial_err.mean),
            fmt_num(rec.double_err.mean),
            fmt_num(rec.objective.mean),
            flag(rec.partial),
        );
    }
    out
}

pub fn stability_grid_csv(grid: &StabilityGrid) -> String {
    let mut out = format!("eta,{},spectral_radius,stable_flag", grid.kind.second_axis_name());
    if grid.closed_form.is_some() {
        out.push_str(",closed_form_flag");
    }
    out.push('\n');
    let etas = grid.eta_axis.points();
    let seconds = grid.second_axis.points();
    for (i, eta) in etas.iter().enumerate() {
        for (j, second) in seconds.iter().enumerate() {
            let idx = i * seconds.len() + j;
            let radius = grid.values[idx];
            let _ = write!(
                out,
                "{},{},{},{}",
                fmt_num(*eta),
                fmt_num(*second),
                fmt_num(radius),
                flag(radius <= 1.0 + elastica_core::analysis::BOUNDARY_TOL)
            );
            if let Some(cf) = &grid.closed_form {
                let _ = write!(out, ",{}", flag(cf[idx]));
            }
            out.push('\n');
        }
    }
    out
}

pub fn horizon_label(h: Horizon) -> String {
    match h {
        Horizon::Step(t) => t.to_string(),
        Horizon::Infinity => "inf".into(),
    }
}

pub fn mse_csv(cells: &[MseCell]) -> String {
    let mut out = String::from("p,t,eta,beta,mse,diverged_flag\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.p,
            horizon_label(c.horizon),
            fmt_num(c.eta),
            fmt_num(c.beta),
            fmt_num(c.mse),
            flag(c.diverged)
        );
    }
    out
}

/// Ordered `key = value` pairs for a sidecar's `[meta]` section.
#[derive(Debug, Clone, Default)]
pub struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new() -> Self {
        let mut meta = Self::default();
        meta.set("format_version", FORMAT_VERSION);
        meta.set("code_version", env!("CARGO_PKG_VERSION"));
        meta
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn set_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format!("{value:?}"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `[meta]` block followed by `body` (usually a resolved config).
    pub fn render(&self, body: &str) -> String {
        let mut out = String::from("[meta]\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        if !body.is_empty() {
            out.push('\n');
            out.push_str(body);
        }
        out
    }
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `csv` to `path` and the sidecar next to it.
pub fn write_bundle(path: &Path, csv: &str, meta: &Meta, body: &str) -> Result<(), CliError> {
    write_file(path, csv)?;
    write_file(&meta_path(path), &meta.render(body))
}
