use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elastica_cli::commands::{
    self, parse_grid_kind, parse_horizons, parse_p_list, parse_range, read_config_text, GridRequest, MseRequest,
};
use elastica_cli::config::{ExperimentConfig, ValidateSpec};
use elastica_cli::CliError;

#[derive(Parser)]
#[command(name = "elastica", version, about = "Parameter-server SGD simulator and stability analyser")]
struct Cli {
    /// Worker threads for replica and grid parallelism; never changes results.
    #[arg(long, global = true, env = "ELASTICA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file and write the trajectory CSV plus `.meta` sidecar.
    Simulate(RunArgs),
    /// Spectral radius of the round-robin cycle map over an (eta, rho|alpha) grid.
    StabilityGrid(GridArgs),
    /// Closed-form MSE of the synchronous center over (p, t, eta, beta).
    MseTheory(MseArgs),
    /// Run a validation scenario; exit status 4 if any check fails.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// admm or easgd.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// `lo:hi`, sampled over (lo, hi].
    #[arg(long)]
    eta_range: Option<String>,
    #[arg(long)]
    rho_range: Option<String>,
    #[arg(long)]
    alpha_range: Option<String>,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long, default_value = "stability.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct MseArgs {
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    /// Comma-separated worker counts.
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated horizons; `inf` for the stationary value.
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    eta_range: Option<String>,
    #[arg(long)]
    beta_range: Option<String>,
    #[arg(long, default_value_t = 50)]
    resolution: usize,
    #[arg(long, default_value = "mse.csv")]
    out: PathBuf,
}

fn load_experiment(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::parse(&read_config_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_experiment(args)?;
    let outcome = commands::simulate(&cfg, args.out.as_deref())?;
    println!(
        "wrote {} ({} rows, {}/{} replicas diverged)",
        outcome.csv_path.display(),
        outcome.rows,
        outcome.diverged,
        outcome.replicas
    );
    Ok(())
}

fn run_grid(args: &GridArgs) -> Result<(), CliError> {
    let kind = parse_grid_kind(&args.kind)?;
    let mut req = GridRequest::defaults(kind, args.p);
    req.resolution = args.resolution;
    if let Some(r) = &args.eta_range {
        req.eta_range = parse_range("eta-range", r)?;
    }
    let (own, other) = match kind {
        elastica_core::analysis::GridKind::Admm => (("rho-range", &args.rho_range), ("alpha-range", &args.alpha_range)),
        elastica_core::analysis::GridKind::Easgd => (("alpha-range", &args.alpha_range), ("rho-range", &args.rho_range)),
    };
    if other.1.is_some() {
        return Err(CliError::Config {
            line: None,
            message: format!("--{} does not apply to --kind {}", other.0, args.kind),
        });
    }
    if let Some(r) = own.1 {
        req.second_range = parse_range(own.0, r)?;
    }
    let grid = commands::write_stability_grid(&req, &args.out)?;
    println!(
        "wrote {} ({} cells, {} unstable, max radius {:.6})",
        args.out.display(),
        grid.values.len(),
        grid.unstable_count(),
        grid.max_value()
    );
    Ok(())
}

fn run_mse(args: &MseArgs) -> Result<(), CliError> {
    let mut req = MseRequest {
        h: args.h,
        sigma: args.sigma,
        x0: args.x0,
        resolution: args.resolution,
        ..MseRequest::default()
    };
    if let Some(p) = &args.p {
        req.p_list = parse_p_list(p)?;
    }
    if let Some(t) = &args.t {
        req.horizons = parse_horizons(t)?;
    }
    if let Some(r) = &args.eta_range {
        req.eta_range = parse_range("eta-range", r)?;
    }
    if let Some(r) = &args.beta_range {
        req.beta_range = parse_range("beta-range", r)?;
    }
    let rows = commands::write_mse_theory(&req, &args.out)?;
    println!("wrote {} ({rows} rows)", args.out.display());
    Ok(())
}

fn run_validate(args: &RunArgs) -> Result<(), CliError> {
    let mut spec = ValidateSpec::parse(&read_config_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let checks = commands::validate(&spec)?;
    let report: String = checks.iter().map(|c| format!("{c}\n")).collect();
    print!("{report}");
    if let Some(out) = &args.out {
        elastica_cli::output::write_file(Path::new(out), &report)?;
    }
    let failed = checks.iter().filter(|c| c.failed()).count();
    if failed > 0 {
        return Err(CliError::ValidationFailed(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("elastica: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::StabilityGrid(a) => run_grid(a),
        Command::MseTheory(a) => run_mse(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("elastica: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
