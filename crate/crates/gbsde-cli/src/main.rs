//! Batch driver for the reflected-system solvers: each subcommand reads a
//! declarative TOML problem file, runs one pipeline, and writes its
//! artifacts (CSV tables and JSON reports) into an output directory
//! together with a manifest that can reproduce the run.
//!
//! Exit codes: `0` success, `1` usage error, `2` configuration or
//! validation failure, `3` the run finished but raised a convergence or
//! ordering flag (artifacts are still written).

use std::env;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gbsde::config::{
    manifest_to_json, parse_manifest, parse_problem_toml, ControlConfig, ProblemConfig,
    RunManifest, SimulationConfig, VersionInfo, MANIFEST_FORMAT,
};
use gbsde::report::{
    field_time_stride, write_ensemble_csv, write_field_csv, write_json, write_residual_csv,
    write_scenario_csv, write_slab_csv, write_study_csv, write_trace_csv,
};
use gbsde::{
    comparison_check, complementarity_residual, evaluate_cylinder, picard_global_solve,
    refinement_study, simulate_gsde, solve_obstacle, sup_over_scenarios, validate_problem, Error,
    Result, ScenarioControl,
};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_FLAGGED: u8 = 3;

/// Sample count of the pre-solve structural validation.
const VALIDATION_SAMPLES: usize = 128;
/// Monte Carlo paths per scenario when neither the command line nor the
/// problem file says otherwise.
const DEFAULT_BOUND_PATHS: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "gbsde",
    version,
    about = "Solvers and diagnostics for reflected backward systems under volatility-band uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the obstacle system by the penalized monotone march
    Solve(SolveArgs),
    /// Solve by slab-wise fixed-point iteration with contraction certificates
    Picard(PicardArgs),
    /// Evaluate the worst-case expectation of the configured multi-time payoff
    Gexp(GexpArgs),
    /// Monte Carlo lower bound on the worst-case expectation over scenario controls
    McBound(McBoundArgs),
    /// Simulate the forward state under one scenario control
    Simulate(SimulateArgs),
    /// Check order preservation between a dominating and a dominated problem
    Compare(CompareArgs),
    /// Tabulate complementarity-residual decay under lattice refinement
    Study(StudyArgs),
    /// Re-execute a run from its manifest
    Rerun(RerunArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Output directory [default: $GBSDE_OUT_DIR, else ./out]
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Seed of every stochastic step of the command
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    /// Override the number of spatial nodes
    #[arg(long)]
    nx: Option<usize>,
    /// Override the number of time steps
    #[arg(long)]
    nt: Option<usize>,
    /// Override the left edge of the spatial domain
    #[arg(long)]
    x_min: Option<f64>,
    /// Override the right edge of the spatial domain
    #[arg(long)]
    x_max: Option<f64>,
}

impl GridArgs {
    fn apply(&self, cfg: &mut ProblemConfig) {
        if let Some(nx) = self.nx {
            cfg.grid.nx = nx;
        }
        if let Some(nt) = self.nt {
            cfg.grid.nt = nt;
        }
        if let Some(x) = self.x_min {
            cfg.grid.x_min = x;
        }
        if let Some(x) = self.x_max {
            cfg.grid.x_max = x;
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    /// Override the penalty schedule with levels 1, 2, ..., 2^EXPONENT
    #[arg(long, value_name = "EXPONENT")]
    max_exponent: Option<u32>,
    /// Override the schedule stop tolerance
    #[arg(long)]
    stop_tol: Option<f64>,
}

impl ScheduleArgs {
    fn apply(&self, cfg: &mut ProblemConfig) {
        if self.max_exponent.is_none() && self.stop_tol.is_none() {
            return;
        }
        let mut schedule = cfg.schedule.clone().unwrap_or_default();
        if let Some(e) = self.max_exponent {
            schedule.max_exponent = Some(e);
            schedule.levels = None;
        }
        if let Some(tol) = self.stop_tol {
            schedule.stop_tol = Some(tol);
        }
        cfg.schedule = Some(schedule);
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem description (TOML)
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Time stride of field/residual CSV rows [default: about 100 levels]
    #[arg(long)]
    field_stride: Option<usize>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct PicardArgs {
    /// Problem description (TOML)
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Override the initial slab width
    #[arg(long)]
    slab_width: Option<f64>,
    /// Override the fixed penalty level of the frozen one-dimensional solves
    #[arg(long)]
    penalty: Option<u32>,
    /// Time stride of field/residual CSV rows [default: about 100 levels]
    #[arg(long)]
    field_stride: Option<usize>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct GexpArgs {
    /// Problem description (TOML) with a [cylinder] section
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct McBoundArgs {
    /// Problem description (TOML) with a [cylinder] section
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    /// Monte Carlo paths per scenario [default: [simulation] n_paths, else 10000]
    #[arg(long)]
    paths: Option<usize>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Problem description (TOML)
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Starting state (overrides the [simulation] section)
    #[arg(long)]
    x0: Option<f64>,
    /// Number of simulated paths
    #[arg(long)]
    paths: Option<usize>,
    /// Euler steps [default: one per grid level]
    #[arg(long)]
    steps: Option<usize>,
    /// Index into the scenario-control family [default: 0]
    #[arg(long)]
    control: Option<usize>,
    /// Time stride of ensemble CSV rows [default: about 100 levels]
    #[arg(long)]
    field_stride: Option<usize>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Problem declared larger (TOML); its grid and schedule drive the solves
    #[arg(long, value_name = "FILE")]
    problem_hi: PathBuf,
    /// Problem declared smaller (TOML)
    #[arg(long, value_name = "FILE")]
    problem_lo: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct StudyArgs {
    /// Problem description (TOML)
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Number of refinements (dx halved, dt quartered each level)
    #[arg(long)]
    refine: Option<usize>,
    /// Evaluation point of the tabulated value at t = 0 [default: domain midpoint]
    #[arg(long)]
    x_eval: Option<f64>,
    /// Penalty level of the studied march (0 = unreflected)
    #[arg(long)]
    penalty: Option<u32>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest of a previous run (JSON)
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Output directory [default: $GBSDE_OUT_DIR, else ./out]
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

/// How a completed run ends: clean, or with a quality flag that maps to
/// exit code 3 while leaving every artifact in place.
enum Outcome {
    Done,
    Flagged(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged(note)) => {
            eprintln!("flagged: {note} (artifacts written)");
            ExitCode::from(EXIT_FLAGGED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Solve(a) => {
            let mut cfg = load_problem(&a.problem)?;
            a.grid.apply(&mut cfg);
            a.schedule.apply(&mut cfg);
            let dir = out_dir(a.io.out_dir)?;
            exec_solve(&cfg, a.io.seed, a.field_stride, &dir)
        }
        Command::Picard(a) => {
            let mut cfg = load_problem(&a.problem)?;
            a.grid.apply(&mut cfg);
            let mut pcfg = cfg.picard.unwrap_or_default();
            if let Some(w) = a.slab_width {
                pcfg.slab_width = w;
            }
            if let Some(p) = a.penalty {
                pcfg.penalty = p;
            }
            cfg.picard = Some(pcfg);
            let dir = out_dir(a.io.out_dir)?;
            exec_picard(&cfg, a.io.seed, a.field_stride, &dir)
        }
        Command::Gexp(a) => {
            let mut cfg = load_problem(&a.problem)?;
            a.grid.apply(&mut cfg);
            let dir = out_dir(a.io.out_dir)?;
            exec_gexp(&cfg, a.io.seed, &dir)
        }
        Command::McBound(a) => {
            let mut cfg = load_problem(&a.problem)?;
            if let Some(p) = a.paths {
                let sim = cfg.simulation.unwrap_or(SimulationConfig {
                    x0: 0.0,
                    n_paths: p,
                    n_steps: None,
                });
                cfg.simulation = Some(SimulationConfig { n_paths: p, ..sim });
            }
            let dir = out_dir(a.io.out_dir)?;
            exec_mc_bound(&cfg, a.io.seed, &dir)
        }
        Command::Simulate(a) => {
            let mut cfg = load_problem(&a.problem)?;
            a.grid.apply(&mut cfg);
            let base = cfg.simulation;
            let x0 = a.x0.or(base.map(|s| s.x0)).ok_or_else(|| {
                Error::Config("simulate needs --x0 or a [simulation] section".into())
            })?;
            let n_paths = a.paths.or(base.map(|s| s.n_paths)).unwrap_or(1000);
            let n_steps = a.steps.or(base.and_then(|s| s.n_steps));
            cfg.simulation = Some(SimulationConfig {
                x0,
                n_paths,
                n_steps,
            });
            let dir = out_dir(a.io.out_dir)?;
            exec_simulate(&cfg, a.io.seed, a.field_stride, a.control, &dir)
        }
        Command::Compare(a) => {
            let mut cfg_hi = load_problem(&a.problem_hi)?;
            let cfg_lo = load_problem(&a.problem_lo)?;
            a.grid.apply(&mut cfg_hi);
            a.schedule.apply(&mut cfg_hi);
            let dir = out_dir(a.io.out_dir)?;
            exec_compare(&cfg_hi, &cfg_lo, a.io.seed, &dir)
        }
        Command::Study(a) => {
            let mut cfg = load_problem(&a.problem)?;
            a.grid.apply(&mut cfg);
            let mut st = cfg.study.unwrap_or_default();
            if let Some(r) = a.refine {
                st.refine = r;
            }
            if let Some(x) = a.x_eval {
                st.x_eval = Some(x);
            }
            if let Some(p) = a.penalty {
                st.penalty = p;
            }
            cfg.study = Some(st);
            let dir = out_dir(a.io.out_dir)?;
            exec_study(&cfg, a.io.seed, &dir)
        }
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.manifest)?;
            let m = parse_manifest(&text)?;
            let dir = out_dir(a.out_dir)?;
            match m.command.as_str() {
                "solve" => exec_solve(&m.problem, m.seed, m.field_stride, &dir),
                "picard" => exec_picard(&m.problem, m.seed, m.field_stride, &dir),
                "gexp" => exec_gexp(&m.problem, m.seed, &dir),
                "mc-bound" => exec_mc_bound(&m.problem, m.seed, &dir),
                "simulate" => exec_simulate(&m.problem, m.seed, m.field_stride, m.control, &dir),
                "compare" => {
                    let lo = m.problem_lo.as_ref().ok_or_else(|| {
                        Error::Config("a compare manifest needs a problem_lo entry".into())
                    })?;
                    exec_compare(&m.problem, lo, m.seed, &dir)
                }
                "study" => exec_study(&m.problem, m.seed, &dir),
                other => Err(Error::Config(format!(
                    "manifest names unknown command '{other}'"
                ))),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Command bodies. Each takes a fully resolved configuration (command-line
// overrides already applied), normalizes any remaining defaults into a local
// copy, writes its artifacts, and embeds that copy into the manifest — so
// re-running from the manifest goes through the same body with the same
// effective parameters.
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveDiagnostics {
    converged: bool,
    stop_tol: f64,
    final_m: u32,
    final_sup_delta: f64,
    final_sup_neg_part: f64,
    residual_sup: f64,
    residual_smooth: f64,
    time_restriction: f64,
    /// Wall-clock milliseconds; varies run to run and is deliberately kept
    /// out of every CSV.
    wall_ms: u64,
}

fn exec_solve(
    cfg: &ProblemConfig,
    seed: u64,
    stride: Option<usize>,
    dir: &Path,
) -> Result<Outcome> {
    let spec = cfg.to_spec()?;
    let grid = cfg.build_grid()?;
    let schedule = cfg.schedule()?;
    let stride = stride.unwrap_or_else(|| field_time_stride(grid.nt()));

    let validation = validate_problem(&spec, &grid, VALIDATION_SAMPLES)?;
    write_json_file(dir, "validation.json", &validation)?;
    if !validation.passed {
        let first = validation
            .first_failure()
            .expect("a failed report has a failing check");
        return Err(Error::Validation(format!(
            "problem validation failed at '{}': {}",
            first.name, first.detail
        )));
    }

    let result = solve_obstacle(&spec, &grid, &schedule)?;
    let last = *result.trace.last().expect("schedule ran at least one level");

    write_csv_file(dir, "field.csv", |w| {
        write_field_csv(
            w,
            &spec,
            &grid,
            &result.field,
            Some(&result.residual.field),
            stride,
        )
    })?;
    write_csv_file(dir, "residual.csv", |w| {
        write_residual_csv(w, &grid, &result.residual.field, stride)
    })?;
    write_csv_file(dir, "trace.csv", |w| write_trace_csv(w, &result.trace))?;
    write_json_file(
        dir,
        "diagnostics.json",
        &SolveDiagnostics {
            converged: result.converged,
            stop_tol: result.stop_tol,
            final_m: last.m,
            final_sup_delta: last.sup_delta,
            final_sup_neg_part: last.sup_neg_part,
            residual_sup: result.residual.sup,
            residual_smooth: result.residual.sup_smooth,
            time_restriction: result.residual.time_restriction,
            wall_ms: result.wall_ms,
        },
    )?;
    write_manifest(
        dir,
        "solve",
        cfg.clone(),
        None,
        seed,
        Some(stride),
        None,
        &[
            "field.csv",
            "residual.csv",
            "trace.csv",
            "validation.json",
            "diagnostics.json",
        ],
    )?;

    println!(
        "solve: converged={} final_m={} sup_delta={:.3e} residual_smooth={:.3e}",
        result.converged, last.m, last.sup_delta, result.residual.sup_smooth
    );
    println!("artifacts -> {}", dir.display());
    if result.converged {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Flagged(format!(
            "penalty schedule exhausted at m={} with sup_delta={:.3e} above stop_tol={:.3e}",
            last.m, last.sup_delta, result.stop_tol
        )))
    }
}

#[derive(Serialize)]
struct PicardDiagnostics {
    converged: bool,
    slab_width: f64,
    halvings: u32,
    certificate: f64,
    n_slabs: usize,
    max_iterations: usize,
    residual_sup: f64,
    residual_smooth: f64,
}

fn exec_picard(
    cfg: &ProblemConfig,
    seed: u64,
    stride: Option<usize>,
    dir: &Path,
) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let mut pcfg = cfg.picard.unwrap_or_default();
    // The manifest must hold finite numbers, so "one slab" is recorded as
    // the horizon itself rather than as infinity.
    if !pcfg.slab_width.is_finite() || pcfg.slab_width > cfg.horizon {
        pcfg.slab_width = cfg.horizon;
    }
    cfg.picard = Some(pcfg);

    let spec = cfg.to_spec()?;
    let grid = cfg.build_grid()?;
    let stride = stride.unwrap_or_else(|| field_time_stride(grid.nt()));

    let result = picard_global_solve(&spec, &grid, &pcfg)?;
    let residual = complementarity_residual(&result.field, &spec, &grid)?;

    write_csv_file(dir, "field.csv", |w| {
        write_field_csv(w, &spec, &grid, &result.field, Some(&residual.field), stride)
    })?;
    write_csv_file(dir, "residual.csv", |w| {
        write_residual_csv(w, &grid, &residual.field, stride)
    })?;
    write_csv_file(dir, "slabs.csv", |w| write_slab_csv(w, &result.slabs))?;
    write_json_file(
        dir,
        "diagnostics.json",
        &PicardDiagnostics {
            converged: result.converged,
            slab_width: result.slab_width,
            halvings: result.halvings,
            certificate: result.certificate,
            n_slabs: result.slabs.len(),
            max_iterations: result.slabs.iter().map(|s| s.iterations).max().unwrap_or(0),
            residual_sup: residual.sup,
            residual_smooth: residual.sup_smooth,
        },
    )?;
    write_manifest(
        dir,
        "picard",
        cfg,
        None,
        seed,
        Some(stride),
        None,
        &["field.csv", "residual.csv", "slabs.csv", "diagnostics.json"],
    )?;

    println!(
        "picard: converged={} slabs={} width={:.4} halvings={} certificate={:.3}",
        result.converged,
        result.slabs.len(),
        result.slab_width,
        result.halvings,
        result.certificate
    );
    println!("artifacts -> {}", dir.display());
    if result.converged {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Flagged(format!(
            "halving budget exhausted at slab width {:.4} with certificate {:.3}",
            result.slab_width, result.certificate
        )))
    }
}

#[derive(Serialize)]
struct GexpReport {
    value: f64,
    times: Vec<f64>,
    nx: usize,
    nt: usize,
}

fn exec_gexp(cfg: &ProblemConfig, seed: u64, dir: &Path) -> Result<Outcome> {
    let cyl = cfg.cylinder.as_ref().ok_or_else(|| {
        Error::Config("gexp needs a [cylinder] section in the problem file".into())
    })?;
    let func = cyl.to_functional()?;
    let grid = cfg.build_grid()?;
    let value = evaluate_cylinder(&func, &cfg.band, &grid)?;

    write_json_file(
        dir,
        "gexp.json",
        &GexpReport {
            value,
            times: cyl.times.clone(),
            nx: grid.nx(),
            nt: grid.nt(),
        },
    )?;
    write_manifest(dir, "gexp", cfg.clone(), None, seed, None, None, &["gexp.json"])?;

    println!("gexp: value={value:.8}");
    println!("artifacts -> {}", dir.display());
    Ok(Outcome::Done)
}

fn control_to_config(c: &ScenarioControl) -> ControlConfig {
    ControlConfig {
        breakpoints: c.breakpoints().to_vec(),
        values: c.values().to_vec(),
    }
}

fn exec_mc_bound(cfg: &ProblemConfig, seed: u64, dir: &Path) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let cyl = cfg.cylinder.as_ref().ok_or_else(|| {
        Error::Config("mc-bound needs a [cylinder] section in the problem file".into())
    })?;
    let func = cyl.to_functional()?;
    if cfg.controls.is_empty() {
        cfg.controls = ScenarioControl::extremes_and_switch(&cfg.band, cfg.horizon)
            .iter()
            .map(control_to_config)
            .collect();
    }
    let sim = cfg.simulation.unwrap_or(SimulationConfig {
        x0: 0.0,
        n_paths: DEFAULT_BOUND_PATHS,
        n_steps: None,
    });
    cfg.simulation = Some(sim);

    let controls = cfg.scenario_controls()?;
    let bound = sup_over_scenarios(&func, &cfg.band, &controls, sim.n_paths, seed)?;

    write_csv_file(dir, "scenarios.csv", |w| write_scenario_csv(w, &bound.table))?;
    write_json_file(dir, "bound.json", &bound)?;
    write_manifest(
        dir,
        "mc-bound",
        cfg,
        None,
        seed,
        None,
        None,
        &["scenarios.csv", "bound.json"],
    )?;

    println!(
        "mc-bound: bound={:.6} best_control={} ({} scenarios x {} paths)",
        bound.bound,
        bound.best_control,
        controls.len(),
        sim.n_paths
    );
    println!("artifacts -> {}", dir.display());
    Ok(Outcome::Done)
}

fn exec_simulate(
    cfg: &ProblemConfig,
    seed: u64,
    stride: Option<usize>,
    control: Option<usize>,
    dir: &Path,
) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let mut sim = cfg.simulation.ok_or_else(|| {
        Error::Config("simulate needs --x0 or a [simulation] section".into())
    })?;
    if cfg.controls.is_empty() {
        cfg.controls = ScenarioControl::extremes_and_switch(&cfg.band, cfg.horizon)
            .iter()
            .map(control_to_config)
            .collect();
    }
    let spec = cfg.to_spec()?;
    let grid = cfg.build_grid()?;
    let n_steps = sim.n_steps.unwrap_or_else(|| grid.nt());
    sim.n_steps = Some(n_steps);
    cfg.simulation = Some(sim);

    let controls = cfg.scenario_controls()?;
    let idx = control.unwrap_or(0);
    let chosen = controls.get(idx).ok_or_else(|| {
        Error::Control(format!(
            "control index {idx} out of range: the family has {} scenarios",
            controls.len()
        ))
    })?;
    let ensemble = simulate_gsde(&spec, sim.x0, chosen, sim.n_paths, n_steps, seed)?;
    let stride = stride.unwrap_or_else(|| field_time_stride(n_steps));

    write_csv_file(dir, "ensemble.csv", |w| {
        write_ensemble_csv(w, &ensemble, stride)
    })?;
    write_manifest(
        dir,
        "simulate",
        cfg,
        None,
        seed,
        Some(stride),
        Some(idx),
        &["ensemble.csv"],
    )?;

    println!(
        "simulate: {} paths x {} steps from x0={} under control {}",
        ensemble.n_paths(),
        ensemble.n_steps(),
        sim.x0,
        idx
    );
    println!("artifacts -> {}", dir.display());
    Ok(Outcome::Done)
}

fn exec_compare(
    cfg_hi: &ProblemConfig,
    cfg_lo: &ProblemConfig,
    seed: u64,
    dir: &Path,
) -> Result<Outcome> {
    let spec_hi = cfg_hi.to_spec()?;
    let spec_lo = cfg_lo.to_spec()?;
    let grid = cfg_hi.build_grid()?;
    let schedule = cfg_hi.schedule()?;

    let report = comparison_check(&spec_hi, &spec_lo, &grid, &schedule)?;

    write_json_file(dir, "compare.json", &report)?;
    write_manifest(
        dir,
        "compare",
        cfg_hi.clone(),
        Some(cfg_lo.clone()),
        seed,
        None,
        None,
        &["compare.json"],
    )?;

    println!(
        "compare: ordered={} min_gap={:.3e} tol={:.3e}",
        report.ordered, report.min_gap, report.tol
    );
    println!("artifacts -> {}", dir.display());
    if report.ordered {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Flagged(format!(
            "computed solutions are not ordered: worst violation {:.3e} exceeds tol {:.3e}",
            report.worst_violation, report.tol
        )))
    }
}

fn exec_study(cfg: &ProblemConfig, seed: u64, dir: &Path) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let mut st = cfg.study.unwrap_or_default();
    let spec = cfg.to_spec()?;
    let base = cfg.build_grid()?;
    let x_eval = st
        .x_eval
        .unwrap_or_else(|| 0.5 * (base.x_min() + base.x_max()));
    st.x_eval = Some(x_eval);
    cfg.study = Some(st);

    let rows = refinement_study(&spec, &base, st.refine, st.penalty, x_eval)?;

    write_csv_file(dir, "study.csv", |w| write_study_csv(w, &rows))?;
    write_manifest(dir, "study", cfg, None, seed, None, None, &["study.csv"])?;

    println!("study: x_eval={x_eval} penalty={}", st.penalty);
    println!(
        "{:>5} {:>7} {:>9} {:>14} {:>16} {:>8}",
        "level", "nx", "nt", "value", "residual_smooth", "ratio"
    );
    for r in &rows {
        let ratio = r.ratio.map(|q| format!("{q:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>5} {:>7} {:>9} {:>14.8} {:>16.6e} {:>8}",
            r.level, r.nx, r.nt, r.value, r.residual_smooth, ratio
        );
    }
    println!("artifacts -> {}", dir.display());
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn load_problem(path: &Path) -> Result<ProblemConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_problem_toml(&text)
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| env::var_os("GBSDE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_csv_file<F>(dir: &Path, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(dir.join(name))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json_file<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let file = fs::File::create(dir.join(name))?;
    let mut w = BufWriter::new(file);
    write_json(&mut w, value)?;
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    dir: &Path,
    command: &str,
    problem: ProblemConfig,
    problem_lo: Option<ProblemConfig>,
    seed: u64,
    field_stride: Option<usize>,
    control: Option<usize>,
    outputs: &[&str],
) -> Result<()> {
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        command: command.into(),
        problem,
        problem_lo,
        seed,
        field_stride,
        control,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        versions: VersionInfo::current(),
    };
    fs::write(dir.join("manifest.json"), manifest_to_json(&manifest)?)?;
    Ok(())
}
