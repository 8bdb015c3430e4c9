//! `sphvortex`: grid checks, maximizer solves and sweeps, point-vortex runs
//! and particle dynamics from a JSON config plus flag overrides.
//!
//! Exit status: 0 success, 1 a numerical check failed, 2 usage or config
//! error, 3 the run aborted.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "sphvortex",
    version,
    about = "Rotating vortex pairs on the sphere"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sweeps and kernel evaluation.
    #[arg(long, global = true, env = "SPHVORTEX_WORKERS")]
    workers: Option<usize>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadrature and Green-operator oracles on one grid.
    GridCheck(GridCheckArgs),
    /// Maximize energy minus impulse for one epsilon.
    Solve(SolveArgs),
    /// Solve over a decreasing list of epsilons and check the trends.
    Sweep(SweepArgs),
    /// Integrate point vortices.
    Pv(PvArgs),
    /// Evolve a solved field as regularized particles.
    Dynamics(DynamicsArgs),
}

#[derive(Args)]
struct GridCheckArgs {
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    random_fields: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Exponent of the Lp norm attached to the class.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    cells_per_core: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `bin`.
    #[arg(long)]
    field_format: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PvArgs {
    /// Latitude of the odd pair.
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    phi0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DynamicsArgs {
    /// Field file written by `solve`.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    perturb_every: Option<usize>,
    #[arg(long)]
    perturb_distance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_problem(p: &mut config::ProblemConfig, a: ProblemArgs) {
    set(&mut p.lambda, a.lambda);
    set(&mut p.kappa, a.kappa);
    set(&mut p.p, a.p);
    set(&mut p.cells_per_core, a.cells_per_core);
    set(&mut p.max_iter, a.max_iter);
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(anyhow::anyhow!("worker pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::defaults(),
    };
    match cli.command {
        Command::GridCheck(a) => {
            let c = &mut cfg.grid_check;
            set(&mut c.n_phi, a.n_phi);
            set(&mut c.n_theta, a.n_theta);
            set(&mut c.random_fields, a.random_fields);
            set(&mut c.seed, a.seed);
            if cli.print_config {
                return print(&*c);
            }
            commands::grid_check(c)
        }
        Command::Solve(a) => {
            let c = &mut cfg.solve;
            apply_problem(&mut c.problem, a.problem);
            set(&mut c.epsilon, a.eps);
            set(&mut c.output_dir, a.out);
            set(&mut c.field_format, a.field_format);
            match (a.n_phi, a.n_theta) {
                (Some(n_phi), Some(n_theta)) => {
                    c.grid = Some(sphere_vortex::field::GridDims { n_phi, n_theta })
                }
                (None, None) => {}
                _ => {
                    return Err(Failure::Usage(anyhow::anyhow!(
                        "--n-phi and --n-theta go together"
                    )))
                }
            }
            if cli.print_config {
                return print(&*c);
            }
            commands::solve(c)
        }
        Command::Sweep(a) => {
            let c = &mut cfg.sweep;
            apply_problem(&mut c.problem, a.problem);
            set(&mut c.epsilons, a.eps);
            set(&mut c.output, a.out);
            if cli.print_config {
                return print(&*c);
            }
            commands::sweep(c)
        }
        Command::Pv(a) => {
            let c = &mut cfg.pv;
            set(&mut c.pair.theta0, a.theta0);
            set(&mut c.pair.phi0, a.phi0);
            set(&mut c.pair.kappa, a.kappa);
            set(&mut c.omega_frame, a.omega);
            set(&mut c.t_end, a.t_end);
            set(&mut c.dt, a.dt);
            set(&mut c.stride, a.stride);
            set(&mut c.output, a.out);
            if cli.print_config {
                return print(&*c);
            }
            commands::pv(c)
        }
        Command::Dynamics(a) => {
            let c = &mut cfg.dynamics;
            if a.field.is_some() {
                c.field = a.field;
            }
            set(&mut c.lambda, a.lambda);
            if a.t_end.is_some() {
                c.t_end = a.t_end;
            }
            set(&mut c.dt, a.dt);
            if a.delta.is_some() {
                c.delta = a.delta;
            }
            set(&mut c.omega_frame, a.omega);
            set(&mut c.stride, a.stride);
            if a.perturb_every.is_some() {
                c.perturb_every = a.perturb_every;
            }
            set(&mut c.perturb_distance, a.perturb_distance);
            set(&mut c.output, a.out);
            if cli.print_config {
                return print(&*c);
            }
            commands::dynamics(c)
        }
    }
}

fn print<T: serde::Serialize>(section: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(section).map_err(|e| Failure::Usage(e.into()))?;
    println!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sphvortex: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
