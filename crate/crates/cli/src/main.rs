//! `hopf`: point-wise Hamilton-Jacobi value functions, minimum-time
//! control, and trajectory generation for linear systems, driven by TOML
//! scenario configs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::QueryKind;

#[derive(Parser)]
#[command(
    name = "hopf",
    about = "Grid-free time-optimal control of linear systems via the generalized Hopf formula",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the value function at one state and horizon.
    Value(CommonArgs),
    /// Find the minimum time to reach the target (optional trajectory CSV).
    MinTime(CommonArgs),
    /// Minimum time plus trajectory reconstruction; requires --out.
    Trajectory(CommonArgs),
    /// Sweep the value function over a state-space grid, one field and one
    /// contour file per horizon.
    Grid(CommonArgs),
    /// Compare nominal vs sigma-point-robust controllers by Monte Carlo.
    Unscented(CommonArgs),
    /// Dimensional-scaling benchmark with a polynomial fit of solve time.
    Bench(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (TOML).
    #[arg(long, short)]
    config: PathBuf,

    /// Override solver.tau.
    #[arg(long)]
    tau: Option<f64>,

    /// Override solver.epsilon.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Override solver.max_iter.
    #[arg(long)]
    max_iter: Option<usize>,

    /// Override query.x0 / the unscented mean (comma-separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,

    /// Override query.t.
    #[arg(long)]
    t: Option<f64>,

    /// Override query.t_max.
    #[arg(long)]
    t_max: Option<f64>,

    /// Override query.seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override query.mc_samples.
    #[arg(long)]
    mc_samples: Option<usize>,

    /// Worker threads for grid sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Output file (trajectory) or directory (grid/unscented/bench).
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Also write whitespace-separated plot-ready .dat files.
    #[arg(long)]
    emit_gnuplot: bool,
}

impl CommonArgs {
    fn expected_kind(&self, command: &Command) -> QueryKind {
        match command {
            Command::Value(_) => QueryKind::Value,
            Command::MinTime(_) => QueryKind::MinTime,
            Command::Trajectory(_) => QueryKind::Trajectory,
            Command::Grid(_) => QueryKind::Grid,
            Command::Unscented(_) => QueryKind::Unscented,
            Command::Bench(_) => QueryKind::Bench,
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let args = match &cli.command {
        Command::Value(a)
        | Command::MinTime(a)
        | Command::Trajectory(a)
        | Command::Grid(a)
        | Command::Unscented(a)
        | Command::Bench(a) => a,
    };
    let expected = args.expected_kind(&cli.command);
    let (problem, mut settings, mut query) = commands::load(&args.config, expected)?;

    if let Some(tau) = args.tau {
        settings.override_tau(tau);
    }
    if let Some(eps) = args.epsilon {
        settings.override_epsilon(eps);
    }
    if let Some(mi) = args.max_iter {
        settings.override_max_iter(mi);
    }
    if let Some(x0) = &args.x0 {
        query.x0 = Some(x0.clone());
    }
    if let Some(t) = args.t {
        query.t = Some(t);
    }
    if let Some(t_max) = args.t_max {
        query.t_max = Some(t_max);
    }
    if let Some(seed) = args.seed {
        query.seed = Some(seed);
    }
    if let Some(s) = args.mc_samples {
        query.mc_samples = Some(s);
    }

    let default_dir = PathBuf::from(".");
    match cli.command {
        Command::Value(_) => commands::run_value(&problem, &settings, &query),
        Command::MinTime(ref a) => commands::run_min_time(
            &problem,
            &settings,
            &query,
            a.out.as_deref(),
            a.emit_gnuplot,
        ),
        Command::Trajectory(ref a) => commands::run_trajectory(
            &problem,
            &settings,
            &query,
            a.out.as_deref(),
            a.emit_gnuplot,
        ),
        Command::Grid(ref a) => commands::run_grid(
            &problem,
            &settings,
            &query,
            a.out.as_deref().unwrap_or(&default_dir),
            a.workers,
            a.emit_gnuplot,
        ),
        Command::Unscented(ref a) => {
            commands::run_unscented(&problem, &settings, &query, a.out.as_deref())
        }
        Command::Bench(ref a) => commands::run_bench(
            &settings,
            &query,
            a.out.as_deref().unwrap_or(&default_dir),
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    };
    std::process::exit(code);
}
