//! Command-line driver for the switching-system solver and verifiers.
//!
//! Exit codes: 0 success or pass, 1 a check failed, 2 input error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use oswitch_core::assumptions::{validate, ValidateOptions};
use oswitch_core::barriers::{build_phi, sample_barriers, select_constants, write_barrier_csv};
use oswitch_core::report::Report;
use oswitch_core::scheme::{read_solution_csv, solve, write_solution_csv, SchemeConfig, SchemeMode};
use oswitch_core::verify::{
    comparison_check, convergence_study, default_tolerance, residual_check, write_study_csv, ComparisonMode,
    Reference, Role,
};
use oswitch_core::{Error, ProblemConfig, ProblemSpec, Result, SpaceTimeGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable consulted for the thread count when `--threads` is absent.
pub const THREADS_ENV: &str = "OSWITCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Solve,
    Verify,
    Barriers,
    Study,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleChoice {
    Sub,
    Super,
    Both,
}

/// Extra inputs of the `verify` subcommand.
#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub solution: PathBuf,
    pub against: Option<PathBuf>,
    pub comparison: ComparisonMode,
    pub role: RoleChoice,
    pub tol_factor: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub h: Option<f64>,
    pub dt: Option<f64>,
    pub mode: SchemeMode,
    pub seed: u64,
    /// `None` defers to [`THREADS_ENV`], then to the number of cores.
    pub threads: Option<usize>,
    pub verify: Option<VerifyArgs>,
}

/// Outcome of a run: an exit code plus the files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn exit_code_for(err: &Error) -> i32 {
    if err.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| Error::Config {
            key: THREADS_ENV.into(),
            message: format!("expected a thread count, got `{v}`"),
        }),
        Err(_) => Ok(None),
    }
}

/// Runs one subcommand inside a dedicated thread pool.
pub fn run(cfg: &RunConfig) -> RunOutcome {
    let result = resolve_threads(cfg.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads.filter(|&n| n > 0) {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::Config {
            key: "threads".into(),
            message: e.to_string(),
        })?;
        let threads = pool.current_num_threads();
        pool.install(|| dispatch(cfg, threads))
    });
    result.unwrap_or_else(|e| RunOutcome {
        code: exit_code_for(&e),
        files: Vec::new(),
        summary: format!("error: {e}"),
    })
}

fn dispatch(cfg: &RunConfig, threads: usize) -> Result<RunOutcome> {
    let problem = ProblemConfig::load(&cfg.config)?;
    let (spec, grid) = problem.build(cfg.h, cfg.dt)?;
    let grid = Arc::new(grid);
    fs::create_dir_all(&cfg.out)?;
    let mut writer = Writer {
        dir: &cfg.out,
        files: Vec::new(),
    };
    let (code, summary) = match cfg.command {
        Command::Validate => run_validate(cfg, &spec, &grid, &mut writer)?,
        Command::Solve => run_solve(cfg, &spec, &grid, threads, &mut writer)?,
        Command::Verify => run_verify(cfg, &spec, &grid, &mut writer)?,
        Command::Barriers => run_barriers(&problem, &spec, &grid, &mut writer)?,
        Command::Study => run_study(cfg, &problem, &spec, &grid, &mut writer)?,
    };
    Ok(RunOutcome {
        code,
        files: writer.files,
        summary,
    })
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn report(&mut self, stem: &str, report: &impl Report) -> Result<String> {
        let text = report.to_text();
        self.write(&format!("{stem}.txt"), text.as_bytes())?;
        self.write(&format!("{stem}.toml"), report.to_toml()?.as_bytes())?;
        Ok(text)
    }
}

fn scheme_config(mode: SchemeMode) -> SchemeConfig {
    SchemeConfig {
        mode,
        ..SchemeConfig::default()
    }
}

fn run_validate(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    out: &mut Writer<'_>,
) -> Result<(i32, String)> {
    let opts = ValidateOptions {
        seed: cfg.seed,
        ..ValidateOptions::default()
    };
    let report = validate(spec, grid, opts);
    let text = out.report("validation", &report)?;
    let code = if report.comparison_ok { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok((code, text))
}

#[derive(Serialize)]
struct GridMeta {
    dim: usize,
    nodes: usize,
    h: f64,
    dt: f64,
    steps: usize,
    horizon: f64,
}

impl GridMeta {
    fn of(grid: &SpaceTimeGrid) -> Self {
        Self {
            dim: grid.dim(),
            nodes: grid.len(),
            h: grid.h(),
            dt: grid.dt(),
            steps: grid.steps(),
            horizon: grid.horizon(),
        }
    }
}

#[derive(Serialize)]
struct SolveMeta {
    config: String,
    modes: usize,
    scheme: String,
    tol_sw: f64,
    linear_tol: f64,
    cfl_ratio: f64,
    max_complementarity: f64,
    total_sweeps: usize,
    max_sweeps_per_step: usize,
    final_active: usize,
    threads: usize,
    grid: GridMeta,
}

fn run_solve(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    grid: &Arc<SpaceTimeGrid>,
    threads: usize,
    out: &mut Writer<'_>,
) -> Result<(i32, String)> {
    let scheme = scheme_config(cfg.mode);
    let result = solve(spec, grid.clone(), &scheme)?;
    let mut csv = Vec::new();
    write_solution_csv(&mut csv, &result.solution)?;
    out.write("solution.csv", &csv)?;
    let meta = SolveMeta {
        config: cfg.config.display().to_string(),
        modes: spec.modes(),
        scheme: cfg.mode.name().into(),
        tol_sw: scheme.tol_sw,
        linear_tol: scheme.linear_tol,
        cfl_ratio: result.cfl_ratio,
        max_complementarity: result.max_complementarity,
        total_sweeps: result.sweeps.iter().sum(),
        max_sweeps_per_step: result.sweeps.iter().copied().max().unwrap_or(0),
        final_active: result.active.last().copied().unwrap_or(0),
        threads,
        grid: GridMeta::of(grid),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Serialize(e.to_string()))?;
    out.write("solution.toml", text.as_bytes())?;
    Ok((
        EXIT_OK,
        format!(
            "solved {} steps ({} mode), max complementarity {:e}",
            grid.steps(),
            cfg.mode.name(),
            result.max_complementarity
        ),
    ))
}

fn run_verify(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    grid: &Arc<SpaceTimeGrid>,
    out: &mut Writer<'_>,
) -> Result<(i32, String)> {
    let args = cfg.verify.as_ref().ok_or_else(|| Error::Config {
        key: "solution".into(),
        message: "verify needs --solution".into(),
    })?;
    let read = |path: &Path| -> Result<_> {
        let text = fs::read_to_string(path)?;
        read_solution_csv(&text, grid.clone(), spec.modes())
    };
    let u = read(&args.solution)?;
    let tol = default_tolerance(grid, args.tol_factor);
    let mut passed = true;
    let mut summary = String::new();
    let roles: &[(Role, &str)] = match args.role {
        RoleChoice::Sub => &[(Role::Subsolution, "residual_sub")],
        RoleChoice::Super => &[(Role::Supersolution, "residual_super")],
        RoleChoice::Both => &[(Role::Subsolution, "residual_sub"), (Role::Supersolution, "residual_super")],
    };
    for (role, stem) in roles {
        let report = residual_check(&u, spec, *role, tol)?;
        passed &= report.passed;
        summary.push_str(&out.report(stem, &report)?);
    }
    if let Some(path) = &args.against {
        let v = read(path)?;
        let report = comparison_check(&u, &v, args.comparison, None, tol)?;
        passed &= report.passed;
        summary.push_str(&out.report("comparison", &report)?);
    }
    Ok((if passed { EXIT_OK } else { EXIT_CHECK_FAILED }, summary))
}

#[derive(Serialize)]
struct BarrierMeta {
    file: String,
    anchor: Vec<f64>,
    anchor_mode: usize,
    eps: f64,
    a_tilde: f64,
    a: f64,
    b: f64,
    kappa: f64,
    c: f64,
}

#[derive(Serialize)]
struct BarrierIndex {
    barrier: Vec<BarrierMeta>,
}

fn run_barriers(
    problem: &ProblemConfig,
    spec: &ProblemSpec,
    grid: &Arc<SpaceTimeGrid>,
    out: &mut Writer<'_>,
) -> Result<(i32, String)> {
    let (anchors, eps) = problem
        .anchors()?
        .unwrap_or_else(|| (vec![(spec.domain.center(), 0)], 0.1));
    let phi = build_phi(&spec.domain)?;
    let mut index = BarrierIndex { barrier: Vec::new() };
    for (k, (x, mode)) in anchors.iter().enumerate() {
        let p = select_constants(spec, &phi, grid, x, *mode, eps)?;
        let (u, v) = sample_barriers(&p, spec, grid)?;
        let name = format!("barriers_{}.csv", k + 1);
        let mut csv = Vec::new();
        write_barrier_csv(&mut csv, &u, &v)?;
        out.write(&name, &csv)?;
        index.barrier.push(BarrierMeta {
            file: name,
            anchor: x.clone(),
            anchor_mode: mode + 1,
            eps,
            a_tilde: p.a_tilde,
            a: p.a,
            b: p.b,
            kappa: p.kappa,
            c: p.c,
        });
    }
    let text = toml::to_string(&index).map_err(|e| Error::Serialize(e.to_string()))?;
    out.write("barriers.toml", text.as_bytes())?;
    Ok((EXIT_OK, format!("wrote {} barrier tables", anchors.len())))
}

/// Refinement factors of the study grids.
const STUDY_LEVELS: [f64; 3] = [1.0, 0.5, 0.25];
/// Reference grid factor when no exact solution is declared.
const STUDY_REFERENCE: f64 = 0.125;

fn run_study(
    cfg: &RunConfig,
    problem: &ProblemConfig,
    spec: &ProblemSpec,
    grid: &Arc<SpaceTimeGrid>,
    out: &mut Writer<'_>,
) -> Result<(i32, String)> {
    let scheme = scheme_config(cfg.mode);
    let (h, dt) = (grid.h(), grid.dt());
    let grid_at = |s: f64| -> Result<Arc<SpaceTimeGrid>> { Ok(Arc::new(problem.grid(Some(h * s), Some(dt * s))?)) };
    let grids = STUDY_LEVELS.iter().map(|&s| grid_at(s)).collect::<Result<Vec<_>>>()?;
    let run = |g: &Arc<SpaceTimeGrid>| Ok(solve(spec, g.clone(), &scheme)?.solution);
    let rows = match problem.exact()? {
        Some(exact) => {
            let w = |i: usize, t: f64, x: &[f64]| exact[i].eval(t, x);
            convergence_study(&grids, run, Reference::Exact(&w))?
        }
        None => {
            let fine = run(&grid_at(STUDY_REFERENCE)?)?;
            convergence_study(&grids, run, Reference::Fine(&fine))?
        }
    };
    let mut csv = Vec::new();
    write_study_csv(&mut csv, &rows)?;
    out.write("study.csv", &csv)?;
    Ok((EXIT_OK, String::from_utf8_lossy(&csv).into_owned()))
}

