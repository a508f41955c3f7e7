//! Sectioned `key = value` experiment files.
//!
//! ```text
//! [problem]
//! kind = quadratic
//! A = 1, 0; 0, 2
//! Sigma = 1, 0; 0, 1
//! x0 = 1, 1
//!
//! [method]
//! name = easgd
//! eta = 0.1
//! beta = 0.9
//!
//! [run]
//! p = 4
//! steps = 1000
//! ```
//!
//! Matrices are rows separated by `;`, entries by `,`. `#` starts a comment.
//! A `[meta]` section holds free-form keys and is ignored, so a run's
//! metadata sidecar is itself a valid experiment file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use elastica_core::distributed::MdownpourVariant;
use elastica_core::harness::{Method, Schedule, SimulationConfig};
use elastica_core::linalg::Matrix;
use elastica_core::problems::{NoiseDist, NonconvexProblem, Problem, QuadraticProblem};

use crate::CliError;

/// Moving rate used when neither `alpha` nor `beta` is given.
pub const DEFAULT_BETA: f64 = 0.9;
/// Constant averaging rate of the moving-average baselines.
pub const DEFAULT_AVERAGE_RATE: f64 = 0.001;

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "kind",
            "dim",
            "A",
            "h",
            "b",
            "sigma",
            "Sigma",
            "noise_dist",
            "x0",
            "centers",
            "depths",
            "width",
            "confinement",
            "noise_std",
        ],
    ),
    (
        "method",
        &["name", "eta", "beta", "alpha", "rho", "delta", "tau", "decay_gamma", "mdownpour_variant"],
    ),
    (
        "run",
        &["p", "schedule", "steps", "replicas", "seed", "record_every", "divergence_cap"],
    ),
    ("output", &["path", "format"]),
    ("validate", &["scenario", "replicas", "seed"]),
    (META_SECTION, &[]),
];

/// Section whose keys are accepted without checking and never read.
pub const META_SECTION: &str = "meta";

/// A value and the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Schema-checked but untyped file contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

fn config_err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Config {
        line: Some(line),
        message: message.into(),
    }
}

fn missing(section: &str, key: &str) -> CliError {
    CliError::Config {
        line: None,
        message: format!("[{section}] requires `{key}`"),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(lineno, "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(config_err(lineno, format!("unknown section [{name}]")));
                }
                if raw.sections.contains_key(name) {
                    return Err(config_err(lineno, format!("section [{name}] appears twice")));
                }
                raw.sections.insert(name.to_string(), (lineno, BTreeMap::new()));
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(lineno, format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .as_deref()
                .ok_or_else(|| config_err(lineno, format!("`{key}` appears before any section header")))?;
            let allowed = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if section != META_SECTION && !allowed.contains(&key) {
                return Err(config_err(lineno, format!("unknown key `{key}` in [{section}]")));
            }
            let entries = &mut raw.sections.get_mut(section).expect("section registered").1;
            if let Some(prev) = entries.get(key) {
                return Err(config_err(
                    lineno,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: lineno,
                },
            );
        }
        Ok(raw)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|(_, e)| e.get(key))
    }

    fn section_line(&self, section: &str) -> Option<usize> {
        self.sections.get(section).map(|(l, _)| *l)
    }

    fn typed<T>(&self, section: &str, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .ok_or_else(|| config_err(e.line, format!("`{key}`: expected {what}, found `{}`", e.value))),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.typed(section, key, parse_f64, "a finite number")
    }

    fn u64(&self, section: &str, key: &str) -> Result<Option<u64>, CliError> {
        self.typed(section, key, |s| s.parse().ok(), "a non-negative integer")
    }

    fn vector(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.typed(section, key, parse_vector, "comma-separated numbers")
    }

    fn matrix(&self, section: &str, key: &str) -> Result<Option<Vec<Vec<f64>>>, CliError> {
        self.typed(section, key, parse_matrix, "rows of numbers separated by `;`")
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.get(section, key).map(|e| e.line).or_else(|| self.section_line(section))
    }

    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            line: self.line_of(section, key),
            message: message.into(),
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_vector(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_matrix(s: &str) -> Option<Vec<Vec<f64>>> {
    let rows: Option<Vec<Vec<f64>>> = s.split(';').map(parse_vector).collect();
    rows.filter(|r| !r.is_empty() && r.iter().all(|row| row.len() == r[0].len()))
}

/// Objective and noise model.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        noise_dist: NoiseDist,
    },
    Nonconvex {
        centers: Vec<Vec<f64>>,
        depths: Vec<f64>,
        width: f64,
        confinement: f64,
        noise_std: f64,
    },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Quadratic { b, .. } => b.len(),
            ProblemSpec::Nonconvex { centers, .. } => centers[0].len(),
        }
    }

    pub fn build(&self) -> Result<Problem, CliError> {
        Ok(match self {
            ProblemSpec::Quadratic {
                a,
                b,
                sigma,
                noise_dist,
            } => QuadraticProblem::new(Matrix::from_rows(a)?, b.clone(), Matrix::from_rows(sigma)?, *noise_dist)?.into(),
            ProblemSpec::Nonconvex {
                centers,
                depths,
                width,
                confinement,
                noise_std,
            } => NonconvexProblem::new(centers.clone(), depths.clone(), *width, *confinement, *noise_std)?.into(),
        })
    }
}

/// Monte-Carlo validation request.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSpec {
    pub scenario: String,
    /// Overrides each scenario's default replica count.
    pub replicas: Option<usize>,
    pub seed: u64,
}

/// Fully resolved experiment: every default applied, `alpha` in its
/// per-method meaning (elastic moving rate, `ηρ` for ADMM, or the constant
/// averaging rate for the moving-average baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub x0: Vec<f64>,
    pub method: Method,
    pub eta: f64,
    pub alpha: Option<f64>,
    pub delta: f64,
    pub tau: u64,
    pub decay_gamma: f64,
    pub mdownpour_variant: MdownpourVariant,
    pub p: usize,
    pub schedule: Schedule,
    pub steps: u64,
    pub replicas: usize,
    pub seed: u64,
    pub record_every: u64,
    pub divergence_cap: f64,
    pub output_path: Option<PathBuf>,
    pub validate: Option<ValidateSpec>,
}

pub fn noise_dist_name(d: NoiseDist) -> &'static str {
    match d {
        NoiseDist::Gaussian => "gaussian",
        NoiseDist::Rademacher => "rademacher",
    }
}

pub fn variant_name(v: MdownpourVariant) -> &'static str {
    match v {
        MdownpourVariant::AsPrinted => "as-printed",
        MdownpourVariant::Conventional => "conventional",
    }
}

fn problem_spec(raw: &RawConfig) -> Result<ProblemSpec, CliError> {
    let s = "problem";
    if !raw.has_section(s) {
        return Err(missing(s, "kind"));
    }
    let kind = raw.get(s, "kind").map(|e| e.value.as_str()).unwrap_or("quadratic");
    let quadratic_keys = ["dim", "A", "h", "b", "sigma", "Sigma", "noise_dist"];
    let nonconvex_keys = ["centers", "depths", "width", "confinement", "noise_std"];
    let reject = |keys: &[&str]| -> Result<(), CliError> {
        for k in keys {
            if let Some(e) = raw.get(s, k) {
                return Err(config_err(e.line, format!("`{k}` does not apply to kind = {kind}")));
            }
        }
        Ok(())
    };
    match kind {
        "quadratic" => {
            reject(&nonconvex_keys)?;
            let a = match (raw.matrix(s, "A")?, raw.f64(s, "h")?) {
                (Some(_), Some(_)) => return Err(raw.fail(s, "h", "give either `A` or `h`, not both")),
                (Some(a), None) => a,
                (None, Some(h)) => vec![vec![h]],
                (None, None) => return Err(missing(s, "A` or `h")),
            };
            let dim = a.len();
            if a.iter().any(|r| r.len() != dim) {
                return Err(raw.fail(s, "A", "`A` must be square"));
            }
            if let Some(d) = raw.u64(s, "dim")? {
                if d as usize != dim {
                    return Err(raw.fail(s, "dim", format!("`dim` = {d} but the curvature is {dim}x{dim}")));
                }
            }
            let b = raw.vector(s, "b")?.unwrap_or_else(|| vec![0.0; dim]);
            if b.len() != dim {
                return Err(raw.fail(s, "b", format!("`b` needs {dim} entries")));
            }
            let sigma = match (raw.matrix(s, "Sigma")?, raw.f64(s, "sigma")?) {
                (Some(_), Some(_)) => return Err(raw.fail(s, "sigma", "give either `sigma` or `Sigma`, not both")),
                (Some(m), None) => m,
                (None, Some(std)) => {
                    if std < 0.0 {
                        return Err(raw.fail(s, "sigma", "`sigma` is a standard deviation and must be >= 0"));
                    }
                    (0..dim)
                        .map(|i| (0..dim).map(|j| if i == j { std * std } else { 0.0 }).collect())
                        .collect()
                }
                (None, None) => vec![vec![0.0; dim]; dim],
            };
            if sigma.len() != dim || sigma.iter().any(|r| r.len() != dim) {
                return Err(raw.fail(s, "Sigma", format!("`Sigma` must be {dim}x{dim}")));
            }
            let noise_dist = match raw.get(s, "noise_dist").map(|e| (e.value.as_str(), e.line)) {
                None | Some(("gaussian", _)) => NoiseDist::Gaussian,
                Some(("rademacher", _)) => NoiseDist::Rademacher,
                Some((other, line)) => {
                    return Err(config_err(line, format!("`noise_dist` must be gaussian or rademacher, found `{other}`")))
                }
            };
            Ok(ProblemSpec::Quadratic {
                a,
                b,
                sigma,
                noise_dist,
            })
        }
        "nonconvex" => {
            reject(&quadratic_keys)?;
            let centers = raw.matrix(s, "centers")?.ok_or_else(|| missing(s, "centers"))?;
            let depths = raw
                .vector(s, "depths")?
                .unwrap_or_else(|| (0..centers.len()).map(|i| 1.0 + i as f64 * 0.5).collect());
            Ok(ProblemSpec::Nonconvex {
                depths,
                width: raw.f64(s, "width")?.unwrap_or(1.0),
                confinement: raw.f64(s, "confinement")?.unwrap_or(0.05),
                noise_std: raw.f64(s, "noise_std")?.unwrap_or(0.0),
                centers,
            })
        }
        other => Err(raw.fail(s, "kind", format!("`kind` must be quadratic or nonconvex, found `{other}`"))),
    }
}

/// Resolves the `alpha` / `beta` / `rho` trio against the method.
fn resolve_alpha(raw: &RawConfig, method: Method, eta: f64, p: usize) -> Result<Option<f64>, CliError> {
    let s = "method";
    let alpha = raw.f64(s, "alpha")?;
    let beta = raw.f64(s, "beta")?;
    let rho = raw.f64(s, "rho")?;
    let given: Vec<&str> = [("alpha", alpha), ("beta", beta), ("rho", rho)]
        .iter()
        .filter(|(_, v)| v.is_some())
        .map(|(k, _)| *k)
        .collect();
    if given.len() > 1 {
        return Err(raw.fail(s, given[1], format!("give only one of {}", given.join(" / "))));
    }
    let unused = |key: &str| raw.fail(s, key, format!("`{key}` does not apply to {method}"));
    if method.is_elastic() {
        if rho.is_some() {
            return Err(unused("rho"));
        }
        return Ok(Some(match (alpha, beta) {
            (Some(a), _) => a,
            (None, Some(b)) => b / p as f64,
            (None, None) => DEFAULT_BETA / p as f64,
        }));
    }
    if method.uses_average_rate() {
        if let Some(k) = given.iter().find(|k| **k != "alpha") {
            return Err(unused(k));
        }
        return Ok(Some(alpha.unwrap_or(DEFAULT_AVERAGE_RATE)));
    }
    if method == Method::AdmmRr {
        if beta.is_some() {
            return Err(unused("beta"));
        }
        return match (alpha, rho) {
            (Some(a), _) => Ok(Some(a)),
            (None, Some(r)) => Ok(Some(eta * r)),
            (None, None) => Err(missing(s, "rho` or `alpha")),
        };
    }
    match given.first() {
        Some(k) => Err(unused(k)),
        None => Ok(None),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let problem = problem_spec(raw)?;
        let dim = problem.dim();
        let x0 = raw.vector("problem", "x0")?.unwrap_or_else(|| vec![0.0; dim]);
        if x0.len() != dim {
            return Err(raw.fail("problem", "x0", format!("`x0` needs {dim} entries")));
        }

        let m = "method";
        let name = raw.get(m, "name").ok_or_else(|| missing(m, "name"))?;
        let method: Method = name
            .value
            .parse()
            .map_err(|_| config_err(name.line, format!("unknown method `{}`", name.value)))?;
        let eta = raw.f64(m, "eta")?.ok_or_else(|| missing(m, "eta"))?;
        let r = "run";
        let p = raw.u64(r, "p")?.unwrap_or(1) as usize;
        let alpha = resolve_alpha(raw, method, eta, p)?;
        let tau = raw.u64(m, "tau")?.unwrap_or(1);
        let mdownpour_variant = match raw.get(m, "mdownpour_variant").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("as-printed", _)) => MdownpourVariant::AsPrinted,
            Some(("conventional", _)) => MdownpourVariant::Conventional,
            Some((other, line)) => {
                return Err(config_err(
                    line,
                    format!("`mdownpour_variant` must be as-printed or conventional, found `{other}`"),
                ))
            }
        };
        let schedule = match raw.get(r, "schedule") {
            Some(e) => e
                .value
                .parse()
                .map_err(|_| config_err(e.line, format!("unknown schedule `{}`", e.value)))?,
            None if method == Method::AdmmRr => Schedule::RoundRobin,
            None => Schedule::Sync,
        };
        let o = "output";
        if let Some(e) = raw.get(o, "format") {
            if e.value != "csv" {
                return Err(config_err(e.line, format!("only `format = csv` is supported, found `{}`", e.value)));
            }
        }
        let validate = if raw.has_section("validate") {
            Some(ValidateSpec::from_raw(raw)?)
        } else {
            None
        };
        let cfg = Self {
            problem,
            x0,
            method,
            eta,
            alpha,
            delta: raw.f64(m, "delta")?.unwrap_or(0.0),
            tau,
            decay_gamma: raw.f64(m, "decay_gamma")?.unwrap_or(0.0),
            mdownpour_variant,
            p,
            schedule,
            steps: raw.u64(r, "steps")?.unwrap_or(1000),
            replicas: raw.u64(r, "replicas")?.unwrap_or(1) as usize,
            seed: raw.u64(r, "seed")?.unwrap_or(0),
            record_every: raw.u64(r, "record_every")?.unwrap_or(tau),
            divergence_cap: raw.f64(r, "divergence_cap")?.unwrap_or(1e12),
            output_path: raw.get(o, "path").map(|e| PathBuf::from(&e.value)),
            validate,
        };
        cfg.to_simulation()?.validate().map_err(|e| CliError::Config {
            line: None,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_simulation(&self) -> Result<SimulationConfig, CliError> {
        let mut cfg = SimulationConfig::new(self.method, self.problem.build()?, self.eta);
        cfg.schedule = self.schedule;
        cfg.p = self.p;
        if let Some(a) = self.alpha {
            if self.method.uses_average_rate() {
                cfg.average_rate = a;
            } else {
                cfg.alpha = a;
            }
        }
        cfg.delta = self.delta;
        cfg.tau = self.tau;
        cfg.decay_gamma = self.decay_gamma;
        cfg.mdownpour_variant = self.mdownpour_variant;
        cfg.x0 = self.x0.clone();
        cfg.steps = self.steps;
        cfg.replicas = self.replicas;
        cfg.seed = self.seed;
        cfg.record_every = self.record_every;
        cfg.divergence_cap = self.divergence_cap;
        Ok(cfg)
    }

    /// Canonical text; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[problem]");
        match &self.problem {
            ProblemSpec::Quadratic {
                a,
                b,
                sigma,
                noise_dist,
            } => {
                let _ = writeln!(out, "kind = quadratic");
                let _ = writeln!(out, "dim = {}", b.len());
                let _ = writeln!(out, "A = {}", fmt_matrix(a));
                let _ = writeln!(out, "b = {}", fmt_vector(b));
                let _ = writeln!(out, "Sigma = {}", fmt_matrix(sigma));
                let _ = writeln!(out, "noise_dist = {}", noise_dist_name(*noise_dist));
            }
            ProblemSpec::Nonconvex {
                centers,
                depths,
                width,
                confinement,
                noise_std,
            } => {
                let _ = writeln!(out, "kind = nonconvex");
                let _ = writeln!(out, "centers = {}", fmt_matrix(centers));
                let _ = writeln!(out, "depths = {}", fmt_vector(depths));
                let _ = writeln!(out, "width = {width:?}");
                let _ = writeln!(out, "confinement = {confinement:?}");
                let _ = writeln!(out, "noise_std = {noise_std:?}");
            }
        }
        let _ = writeln!(out, "x0 = {}", fmt_vector(&self.x0));
        let _ = writeln!(out, "\n[method]");
        let _ = writeln!(out, "name = {}", self.method);
        let _ = writeln!(out, "eta = {:?}", self.eta);
        if let Some(a) = self.alpha {
            let _ = writeln!(out, "alpha = {a:?}");
        }
        let _ = writeln!(out, "delta = {:?}", self.delta);
        let _ = writeln!(out, "tau = {}", self.tau);
        let _ = writeln!(out, "decay_gamma = {:?}", self.decay_gamma);
        let _ = writeln!(out, "mdownpour_variant = {}", variant_name(self.mdownpour_variant));
        let _ = writeln!(out, "\n[run]");
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "schedule = {}", self.schedule);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "replicas = {}", self.replicas);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "record_every = {}", self.record_every);
        let _ = writeln!(out, "divergence_cap = {:?}", self.divergence_cap);
        if let Some(path) = &self.output_path {
            let _ = writeln!(out, "\n[output]\npath = {}\nformat = csv", path.display());
        }
        if let Some(v) = &self.validate {
            let _ = writeln!(out, "\n[validate]\nscenario = {}", v.scenario);
            if let Some(r) = v.replicas {
                let _ = writeln!(out, "replicas = {r}");
            }
            let _ = writeln!(out, "seed = {}", v.seed);
        }
        out
    }
}

impl ValidateSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let s = "validate";
        let scenario = raw.get(s, "scenario").ok_or_else(|| missing(s, "scenario"))?;
        if !crate::validate::SCENARIOS.contains(&scenario.value.as_str()) && scenario.value != "all" {
            return Err(config_err(
                scenario.line,
                format!(
                    "unknown scenario `{}` (expected one of {}, all)",
                    scenario.value,
                    crate::validate::SCENARIOS.join(", ")
                ),
            ));
        }
        let replicas = raw.u64(s, "replicas")?.map(|r| r as usize);
        if replicas == Some(0) {
            return Err(raw.fail(s, "replicas", "`replicas` must be at least 1"));
        }
        Ok(Self {
            scenario: scenario.value.clone(),
            replicas,
            seed: raw.u64(s, "seed")?.unwrap_or(0),
        })
    }
}

fn fmt_vector(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_matrix(m: &[Vec<f64>]) -> String {
    m.iter().map(|r| fmt_vector(r)).collect::<Vec<_>>().join("; ")
}
