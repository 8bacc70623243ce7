//! One runner per subcommand. Results print as single-line JSON records on
//! stdout; bulk data goes to CSV files. Exit codes: 0 success, 1 config
//! error, 2 non-convergence (the record still prints), 3 failed bracket.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use hopf_core::problem::{HopfProblem, SolverConfig};
use hopf_core::solver::{prepare, solve_hopf, HopfSolution};
use hopf_core::time_optimal::{min_time, MinTimeOptions, MinTimeResult};
use hopf_core::trajectory::{reconstruct, simulate_control, Trajectory};
use hopf_core::{unscented, GridSpec, HopfError};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde_json::json;

use crate::config::{vector, ConfigError, QuerySection, ScenarioConfig, SolverSettings};

pub enum CliError {
    Config(String),
    Solver(HopfError),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<HopfError> for CliError {
    fn from(e: HopfError) -> Self {
        CliError::Solver(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(HopfError::NoSignChange { .. }) => 3,
            CliError::Solver(_) => 1,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            CliError::Solver(e) => e.to_string(),
        }
    }
}

type CmdResult = Result<i32, CliError>;

fn required<T: Clone>(field: &Option<T>, key: &str) -> Result<T, CliError> {
    field
        .clone()
        .ok_or_else(|| CliError::Config(format!("query.{key} is required for this command")))
}

fn solution_record(sol: &HopfSolution) -> serde_json::Value {
    json!({
        "phi": sol.value,
        "p_star": sol.minimizer.iter().copied().collect::<Vec<f64>>(),
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "converged": sol.converged,
    })
}

pub fn run_value(
    problem: &HopfProblem,
    settings: &SolverSettings,
    query: &QuerySection,
) -> CmdResult {
    let x0 = vector(&required(&query.x0, "x0")?);
    let t = required(&query.t, "t")?;
    let sol = if t <= hopf_core::solver::MIN_HORIZON {
        solve_hopf(&x0, t, problem, &SolverConfig::default(), None)?
    } else {
        let prep = prepare(problem, t)?;
        let config = settings.for_prepared(&prep);
        prep.solve(&x0, &config, None)?
    };
    let mut record = solution_record(&sol);
    record["t"] = json!(t);
    println!("{record}");
    Ok(if sol.converged { 0 } else { 2 })
}

fn solve_min_time(
    problem: &HopfProblem,
    settings: &SolverSettings,
    x0: &DVector<f64>,
    t_max: f64,
) -> Result<(MinTimeResult, SolverConfig), CliError> {
    // Balanced tau is resolved once, at the bracket end.
    let prep = prepare(problem, t_max)?;
    let config = settings.for_prepared(&prep);
    let result = min_time(x0, 0.0, t_max, problem, &config, &MinTimeOptions::default())?;
    Ok((result, config))
}

fn min_time_record(result: &MinTimeResult) -> serde_json::Value {
    json!({
        "t_star": result.t_star,
        "phi_at_t_star": result.solution.value,
        "newton_steps": result.newton_steps,
        "bisection_steps": result.bisection_steps,
        "bracket": [result.bracket_final.0, result.bracket_final.1],
        "iterations_at_t_star": result.solution.iterations,
        "converged": result.solution.converged,
    })
}

pub fn run_min_time(
    problem: &HopfProblem,
    settings: &SolverSettings,
    query: &QuerySection,
    out: Option<&Path>,
    emit_gnuplot: bool,
) -> CmdResult {
    let x0 = vector(&required(&query.x0, "x0")?);
    let t_max = required(&query.t_max, "t_max")?;
    let (result, _) = solve_min_time(problem, settings, &x0, t_max)?;

    let mut record = min_time_record(&result);
    if let Some(path) = out {
        let traj = reconstruct(&result.solution.minimizer, result.t_star, problem)?;
        write_trajectory(path, &traj)?;
        record["trajectory_csv"] = json!(path.display().to_string());
        if emit_gnuplot {
            let dat = path.with_extension("dat");
            write_trajectory_gnuplot(&dat, &traj)?;
            record["trajectory_dat"] = json!(dat.display().to_string());
        }
    }
    println!("{record}");
    Ok(if result.solution.converged { 0 } else { 2 })
}

pub fn run_trajectory(
    problem: &HopfProblem,
    settings: &SolverSettings,
    query: &QuerySection,
    out: Option<&Path>,
    emit_gnuplot: bool,
) -> CmdResult {
    let out = out.ok_or_else(|| {
        CliError::Config("trajectory command requires --out <csv path>".into())
    })?;
    run_min_time(problem, settings, query, Some(out), emit_gnuplot)
}

pub fn run_grid(
    problem: &HopfProblem,
    settings: &SolverSettings,
    query: &QuerySection,
    out_dir: &Path,
    workers: Option<usize>,
    emit_gnuplot: bool,
) -> CmdResult {
    let bounds: Vec<(f64, f64)> = required(&query.bounds, "bounds")?
        .iter()
        .map(|&[lo, hi]| (lo, hi))
        .collect();
    let resolution = required(&query.resolution, "resolution")?;
    let spec = GridSpec::new(bounds, resolution).map_err(|e| CliError::Config(e.to_string()))?;

    let horizons: Vec<f64> = if let Some(list) = &query.horizons {
        list.clone()
    } else {
        let t_star = match query.t_star {
            Some(t) => t,
            None => {
                let x0 = vector(&required(&query.x0, "x0 (or horizons/t_star)")?);
                let t_max = required(&query.t_max, "t_max")?;
                solve_min_time(problem, settings, &x0, t_max)?.0.t_star
            }
        };
        (1..=10).map(|j| t_star * j as f64 / 10.0).collect()
    };
    if horizons.iter().any(|&t| t <= 0.0) {
        return Err(CliError::Config("grid horizons must be positive".into()));
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut field_files = Vec::new();
    let mut contour_files = Vec::new();
    let mut all_converged = true;
    let mut total_ms = 0.0;
    let contour_capable = spec.axes() == 2;
    for (idx, &t) in horizons.iter().enumerate() {
        let config = settings.for_prepared(&prepare(problem, t)?);
        let field = hopf_core::solve_grid(problem, t, &spec, &config, workers)?;
        all_converged &= field.all_converged();
        total_ms += field.total_solve_ms;

        let field_path = out_dir.join(format!("field_{idx:02}.csv"));
        let mut w = BufWriter::new(File::create(&field_path).map_err(io_err)?);
        field.write_csv(&mut w).map_err(io_err)?;
        field_files.push(field_path.display().to_string());

        if contour_capable {
            let contours = hopf_core::zero_contour(&field)?;
            let contour_path = out_dir.join(format!("contour_{idx:02}.csv"));
            let mut w = BufWriter::new(File::create(&contour_path).map_err(io_err)?);
            hopf_core::grid::write_contours_csv(&contours, t, &mut w).map_err(io_err)?;
            contour_files.push(contour_path.display().to_string());

            if emit_gnuplot {
                write_field_gnuplot(&out_dir.join(format!("field_{idx:02}.dat")), &field)?;
                write_contours_gnuplot(&out_dir.join(format!("contour_{idx:02}.dat")), &contours)?;
            }
        }
    }

    let points = horizons.len() * spec.len();
    let record = json!({
        "horizons": horizons,
        "fields": field_files,
        "contours": contour_files,
        "all_converged": all_converged,
        "mean_solve_ms": total_ms / points as f64,
    });
    println!("{record}");
    Ok(if all_converged { 0 } else { 2 })
}

pub fn run_unscented(
    problem: &HopfProblem,
    settings: &SolverSettings,
    query: &QuerySection,
    out_dir: Option<&Path>,
) -> CmdResult {
    let mu = vector(&required(&query.x0, "x0 (initial-state mean)")?);
    let t_max = required(&query.t_max, "t_max")?;
    let n = problem.state_dim();
    let cov = match (&query.cov, query.std) {
        (Some(rows), None) => {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            DMatrix::from_row_slice(rows.len(), rows[0].len(), &flat)
        }
        (None, Some(std)) => DMatrix::identity(n, n) * std * std,
        _ => {
            return Err(CliError::Config(
                "unscented query needs exactly one of cov or std".into(),
            ))
        }
    };
    let mc_samples = query.mc_samples.unwrap_or(100);
    let seed = query.seed.unwrap_or(0);
    let mse_level = match query.mse_level {
        Some(l) => l,
        None => isotropic_mse_level(problem)?,
    };

    // Nominal controller from the mean.
    let nominal = solve_min_time(problem, settings, &mu, t_max)?.0;
    let nominal_traj = reconstruct(&nominal.solution.minimizer, nominal.t_star, problem)?;

    // Robust controller on the sigma-augmented system.
    let sigma = unscented::sigma_points(&mu, &cov)?;
    let augmented = HopfProblem {
        system: unscented::augment(&problem.system, sigma.len()),
        control_set: problem.control_set,
        target: unscented::mse_target(&sigma.mean_weights, &DVector::zeros(n), mse_level)?,
        quadrature_n: problem.quadrature_n,
        quadrature_rule: problem.quadrature_rule,
    };
    let robust = solve_min_time(&augmented, settings, &sigma.stacked(), t_max)?.0;
    let robust_traj = reconstruct(&robust.solution.minimizer, robust.t_star, &augmented)?;

    // Monte-Carlo playback of both controllers from perturbed starts.
    let cost = problem.target.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let chol = nalgebra::Cholesky::new(cov.clone())
        .ok_or(HopfError::NotPositiveDefinite("initial covariance".into()))?;
    let mut nominal_hits = 0usize;
    let mut robust_hits = 0usize;
    let mut paths: Vec<(usize, &str, Vec<DVector<f64>>, bool)> = Vec::new();
    for sample in 0..mc_samples {
        let noise = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
        let x0 = &mu + chol.l() * noise;

        let path_n = simulate_control(
            &problem.system,
            &x0,
            &nominal_traj.times,
            &nominal_traj.controls,
            10,
        );
        let hit_n = cost.cost(path_n.last().unwrap()) <= 0.0;
        nominal_hits += hit_n as usize;

        let path_r = simulate_control(
            &problem.system,
            &x0,
            &robust_traj.times,
            &robust_traj.controls,
            10,
        );
        let hit_r = cost.cost(path_r.last().unwrap()) <= 0.0;
        robust_hits += hit_r as usize;

        if out_dir.is_some() {
            paths.push((sample, "nominal", path_n, hit_n));
            paths.push((sample, "robust", path_r, hit_r));
        }
    }

    let mut record = json!({
        "nominal_hits": nominal_hits,
        "robust_hits": robust_hits,
        "samples": mc_samples,
        "seed": seed,
        "t_star_nominal": nominal.t_star,
        "t_star_robust": robust.t_star,
        "mse_level": mse_level,
    });
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("mc_trajectories.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        writeln!(w, "# seed: {seed}").map_err(io_err)?;
        let coords: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        writeln!(w, "sample,controller,t,{},hit", coords.join(",")).map_err(io_err)?;
        for (sample, controller, path, hit) in &paths {
            let times = if *controller == "nominal" {
                &nominal_traj.times
            } else {
                &robust_traj.times
            };
            for (t, state) in times.iter().zip(path) {
                let row: Vec<String> = state.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{sample},{controller},{t},{},{hit}", row.join(",")).map_err(io_err)?;
            }
        }
        record["trajectories_csv"] = json!(path.display().to_string());
    }
    println!("{record}");
    Ok(0)
}

/// Derive the mean-square-error bound from an isotropic target `W = r^2 I`.
fn isotropic_mse_level(problem: &HopfProblem) -> Result<f64, CliError> {
    let w = &problem.target.w;
    let r2 = w[(0, 0)];
    let iso = DMatrix::identity(w.nrows(), w.ncols()) * r2;
    if (w - iso).amax() > 1e-12 * r2.abs().max(1.0) {
        return Err(CliError::Config(
            "query.mse_level is required when target.w is not isotropic".into(),
        ));
    }
    Ok(r2 * problem.target.level)
}

/// Fixed horizon for the scaling benchmark; scaling conclusions do not
/// depend on its exact value and iteration counts are reported alongside.
const BENCH_HORIZON: f64 = 1.0;

pub fn run_bench(
    settings: &SolverSettings,
    query: &QuerySection,
    out_dir: &Path,
) -> CmdResult {
    let dims = query
        .dims
        .clone()
        .unwrap_or_else(|| vec![30, 60, 90, 120]);
    let trials = query.trials.unwrap_or(10);
    let seed = query.seed.unwrap_or(909);
    if dims.iter().any(|d| d % 2 != 0 || *d == 0) {
        return Err(CliError::Config(
            "query.dims must contain positive even dimensions (planar samples)".into(),
        ));
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("bench.csv");
    let mut w = BufWriter::new(File::create(&csv_path).map_err(io_err)?);
    writeln!(w, "# seed: {seed}").map_err(io_err)?;
    writeln!(w, "# horizon: {BENCH_HORIZON}").map_err(io_err)?;
    writeln!(w, "dim,avg_ms,avg_iters,trials").map_err(io_err)?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = Vec::new();
    for &d in &dims {
        let (problem, x0) = hopf_core::scenarios::scaling_problem(d / 2, seed.wrapping_add(d as u64));
        let prep = prepare(&problem, BENCH_HORIZON)?;
        let config = settings.for_prepared(&prep);
        // Warmup solve, then averaged timed trials.
        let warm = prep.solve(&x0, &config, None)?;
        if !warm.converged {
            return Err(CliError::Solver(HopfError::InvalidConfig(format!(
                "benchmark solve at dimension {d} did not converge"
            ))));
        }
        let mut total_ms = 0.0;
        let mut total_iters = 0usize;
        for _ in 0..trials {
            let started = Instant::now();
            let sol = prep.solve(&x0, &config, None)?;
            total_ms += started.elapsed().as_secs_f64() * 1e3;
            total_iters += sol.iterations;
        }
        let avg_ms = total_ms / trials as f64;
        let avg_iters = total_iters as f64 / trials as f64;
        writeln!(w, "{d},{avg_ms},{avg_iters},{trials}").map_err(io_err)?;
        rows.push(json!({"dim": d, "avg_ms": avg_ms, "avg_iters": avg_iters}));
        xs.push(d as f64);
        ys.push(avg_ms);
    }
    drop(w);

    let fit = fit_record(&xs, &ys);
    let record = json!({
        "csv": csv_path.display().to_string(),
        "seed": seed,
        "horizon": BENCH_HORIZON,
        "rows": rows,
        "fit": fit,
    });
    println!("{record}");
    Ok(0)
}

/// Least-squares polynomial fit of time vs dimension, degree capped by the
/// sample count: three points give the quadratic, two a line, one just the
/// constant.
fn fit_record(xs: &[f64], ys: &[f64]) -> serde_json::Value {
    match xs.len() {
        0 => json!({}),
        1 => json!({"c0": ys[0]}),
        2 => {
            let c1 = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            json!({"c1": c1, "c0": ys[0] - c1 * xs[0]})
        }
        _ => {
            let n = xs.len();
            let mut design = DMatrix::zeros(n, 3);
            for (i, &x) in xs.iter().enumerate() {
                design[(i, 0)] = x * x;
                design[(i, 1)] = x;
                design[(i, 2)] = 1.0;
            }
            let rhs = DVector::from_column_slice(ys);
            let sol = (design.transpose() * &design)
                .lu()
                .solve(&(design.transpose() * rhs))
                .expect("distinct dimensions give a nonsingular fit");
            json!({"c2": sol[0], "c1": sol[1], "c0": sol[2]})
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("io error: {e}"))
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    traj.write_csv(&mut w).map_err(io_err)
}

/// Plot-ready trajectory: whitespace columns `t z.. x.. u..`.
fn write_trajectory_gnuplot(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for j in 0..traj.len() {
        let mut cols = vec![format!("{}", traj.times[j])];
        cols.extend(traj.z_states[j].iter().map(|v| format!("{v}")));
        cols.extend(traj.x_states[j].iter().map(|v| format!("{v}")));
        cols.extend(traj.controls[j].iter().map(|v| format!("{v}")));
        writeln!(w, "{}", cols.join(" ")).map_err(io_err)?;
    }
    Ok(())
}

/// Plot-ready field: `x1 x2 value` rows, blank line between x1 scanlines.
fn write_field_gnuplot(path: &Path, field: &hopf_core::ValueField) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let r1 = field.spec.resolution[1];
    for flat in 0..field.values.len() {
        let p = field.spec.point(flat);
        writeln!(w, "{} {} {}", p[0], p[1], field.values[flat]).map_err(io_err)?;
        if (flat + 1) % r1 == 0 {
            writeln!(w).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Plot-ready contours: `x1 x2` rows, blank line between polylines.
fn write_contours_gnuplot(path: &Path, contours: &[Vec<[f64; 2]>]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for line in contours {
        for p in line {
            writeln!(w, "{} {}", p[0], p[1]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    Ok(())
}

/// Shared entry: parse, validate, check the query kind, apply overrides.
pub fn load(
    path: &Path,
    expected: crate::config::QueryKind,
) -> Result<(HopfProblem, SolverSettings, QuerySection), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = ScenarioConfig::parse(&text)?;
    if config.query.kind != expected {
        return Err(CliError::Config(format!(
            "config query.kind is '{}' but the subcommand expects '{}'",
            config.query.kind.name(),
            expected.name()
        )));
    }
    let (problem, settings) = config.build()?;
    Ok((problem, settings, config.query))
}
