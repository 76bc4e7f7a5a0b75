//! Monotone finite-difference solver for the switching system.
//!
//! Interior nodes use central second differences and upwind first
//! differences. Boundary nodes close the Neumann condition with the one-sided
//! stencil stored in the grid. The obstacle is enforced at the new time level.
//!
//! Explicit mode marches `u* = u^n - dt F_h(t^n, u^n)`, closes the boundary and
//! projects onto the obstacle. Implicit mode solves, per step, the discrete
//! complementarity system
//!
//! ```text
//! min{ (u_i - u_i^n) / dt + F_h,i(t^{n+1}, u_i), min_j (u_i - u_j + c_ij) } = 0
//! ```
//!
//! (with the boundary closure in place of the PDE row at boundary nodes) by
//! policy iteration: each row picks its minimizing branch and the resulting
//! linear system is solved by sparse LU.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use ndarray::{Array3, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridFunction, NodeKind, SpaceTimeGrid};
use crate::problem::{HjbOperator, ModeOperator, OperatorSpec, ProblemSpec, SwitchingCosts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemeMode {
    Explicit,
    #[default]
    Implicit,
}

impl SchemeMode {
    pub fn name(self) -> &'static str {
        match self {
            SchemeMode::Explicit => "explicit",
            SchemeMode::Implicit => "implicit",
        }
    }
}

impl std::str::FromStr for SchemeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(SchemeMode::Explicit),
            "implicit" => Ok(SchemeMode::Implicit),
            _ => Err(Error::Config {
                key: "mode".into(),
                message: format!("expected `explicit` or `implicit`, got `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    pub tol_sw: f64,
    /// Defaults to `50 m` when `None`.
    pub max_sweeps: Option<usize>,
    pub linear_tol: f64,
    pub cfl_safety: f64,
    /// Outer rounds alternating boundary closure and projection.
    pub max_rounds: usize,
    pub max_policy_iterations: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            mode: SchemeMode::Implicit,
            tol_sw: 1e-10,
            max_sweeps: None,
            linear_tol: 1e-12,
            cfl_safety: 0.9,
            max_rounds: 10,
            max_policy_iterations: 200,
        }
    }
}

impl SchemeConfig {
    pub fn explicit() -> Self {
        Self {
            mode: SchemeMode::Explicit,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if !(self.tol_sw > 0.0) {
            return bad("tol_sw", format!("must be > 0, got {}", self.tol_sw));
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol", format!("must be > 0, got {}", self.linear_tol));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety));
        }
        Ok(())
    }

    fn sweeps_for(&self, modes: usize) -> usize {
        self.max_sweeps.unwrap_or(50 * modes)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solution: GridFunction,
    pub mode: SchemeMode,
    /// Projection sweeps (explicit) or policy iterations (implicit) per step.
    pub sweeps: Vec<usize>,
    /// Number of `(mode, node)` pairs with a binding obstacle, per level.
    pub active: Vec<usize>,
    pub max_complementarity: f64,
    /// `dt / cfl_bound`.
    pub cfl_ratio: f64,
}

/// `F_h(u)_k = diag u_k - sum_l w_l u_l - source` with `w_l >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub diag: f64,
    pub neighbors: Vec<(usize, f64)>,
    pub source: f64,
}

impl StencilRow {
    pub fn apply(&self, u: ArrayView1<'_, f64>, k: usize) -> f64 {
        self.diag * u[k] - self.neighbors.iter().map(|&(l, w)| w * u[l]).sum::<f64>() - self.source
    }

    fn off_diagonal_sum(&self) -> f64 {
        self.neighbors.iter().map(|&(_, w)| w).sum()
    }
}

pub(crate) fn hjb_mode(op: &OperatorSpec, i: usize) -> Result<&HjbOperator> {
    match op.modes.get(i) {
        Some(ModeOperator::Hjb(h)) => Ok(h),
        Some(ModeOperator::Opaque(o)) => Err(Error::UnsupportedOperator(format!(
            "opaque operator `{}` can be verified but not solved",
            o.name
        ))),
        None => Err(Error::ModeIndex {
            index: i,
            modes: op.len(),
        }),
    }
}

/// Monotone stencil of the built-in operator at an interior node.
pub fn stencil_row(op: &HjbOperator, grid: &SpaceTimeGrid, t: f64, node: usize) -> Result<StencilRow> {
    let me = grid.node(node);
    let NodeKind::Interior { axes, .. } = &me.kind else {
        return Err(Error::Problem(format!("node {node} is a boundary node")));
    };
    let n = grid.dim();
    let a = op.diffusion_at(t, &me.x);
    let b = op.drift_at(t, &me.x);
    for k in 0..n {
        for l in 0..n {
            if k != l && a[k * n + l] != 0.0 {
                return Err(Error::UnsupportedOperator(
                    "non-diagonal diffusion: the stencil would not be monotone".into(),
                ));
            }
        }
        if a[k * n + k] < 0.0 {
            return Err(Error::UnsupportedOperator(format!(
                "negative diffusion {} at {:?}",
                a[k * n + k],
                me.x
            )));
        }
    }
    let mut row = StencilRow {
        diag: op.lambda,
        neighbors: Vec::with_capacity(2 * n),
        source: op.source.eval(t, &me.x),
    };
    for (k, (minus, plus)) in axes.iter().enumerate() {
        let (hm, hp) = (minus.distance, plus.distance);
        let akk = a[k * n + k];
        let mut wm = 2.0 * akk / (hm * (hm + hp));
        let mut wp = 2.0 * akk / (hp * (hm + hp));
        if b[k] > 0.0 {
            wp += b[k] / hp;
        } else {
            wm += -b[k] / hm;
        }
        row.diag += wm + wp;
        row.neighbors.push((minus.index, wm));
        row.neighbors.push((plus.index, wp));
    }
    Ok(row)
}

/// `F_h,i(t, u)` at an interior node.
pub fn discretize_operator(
    op: &OperatorSpec,
    grid: &SpaceTimeGrid,
    i: usize,
    t: f64,
    node: usize,
    u_level: ArrayView1<'_, f64>,
) -> Result<f64> {
    let row = stencil_row(hjb_mode(op, i)?, grid, t, node)?;
    Ok(row.apply(u_level, node))
}

/// Largest explicit step keeping the update monotone, scaled by `safety`.
/// Returns the horizon when every coefficient vanishes.
pub fn cfl_bound(op: &OperatorSpec, grid: &SpaceTimeGrid, safety: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..op.len() {
        let h = hjb_mode(op, i)?;
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for k in grid.interior_indices() {
                let row = stencil_row(h, grid, t, k)?;
                worst = worst.max(row.off_diagonal_sum() + h.lambda.max(0.0));
            }
        }
    }
    if worst <= 0.0 {
        Ok(grid.horizon())
    } else {
        Ok(safety / worst)
    }
}

const CLOSURE_TOL: f64 = 1e-12;
const BRACKET_EXPANSIONS: usize = 200;

/// Boundary value `r` solving `(r - inner) / distance + f(t, x, r) = 0`.
pub fn neumann_close(inner: f64, distance: f64, f: &Field, t: f64, x: &[f64]) -> Result<f64> {
    if !f.depends_on_r() {
        return Ok(inner - distance * f.eval(t, x));
    }
    let g = |r: f64| (r - inner) / distance + f.eval_r(t, x, r);
    let start = inner - distance * f.eval_r(t, x, inner);
    let mut width = 1.0 + start.abs();
    let (mut lo, mut hi) = (start - width, start + width);
    let mut expansions = 0;
    while !(g(lo) <= 0.0 && g(hi) >= 0.0) {
        width *= 2.0;
        if g(lo) > 0.0 {
            lo -= width;
        }
        if g(hi) < 0.0 {
            hi += width;
        }
        expansions += 1;
        if expansions > BRACKET_EXPANSIONS || !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::ClosureBracket { inner });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= CLOSURE_TOL * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gauss-Seidel sweeps `u_i <- max(u_i, max_{j != i} (u_j - c_ij))` with the
/// cost matrix given row-major. Returns the projected vector and the number
/// of sweeps, the last of which changed nothing by more than `tol`.
pub fn project_with_matrix(candidate: &[f64], c: &[f64], tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, usize)> {
    let m = candidate.len();
    let mut u = candidate.to_vec();
    for sweep in 1..=max_sweeps {
        let mut changed = false;
        for i in 0..m {
            let mut best = u[i];
            for j in 0..m {
                if j != i {
                    best = best.max(u[j] - c[i * m + j]);
                }
            }
            if best - u[i] > tol {
                changed = true;
            }
            u[i] = best;
        }
        if !changed {
            return Ok((u, sweep));
        }
    }
    Err(Error::SweepOverflow(max_sweeps))
}

/// Projection of one node's component vector onto the obstacle at `(t, x)`.
pub fn obstacle_project(
    candidate: &[f64],
    costs: &SwitchingCosts,
    t: f64,
    x: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, usize)> {
    if candidate.len() < 2 {
        return Err(Error::SingleMode);
    }
    project_with_matrix(candidate, &costs.matrix(t, x), tol, max_sweeps)
}

/// Marches the system from the (projected) initial data to the horizon.
pub fn solve(spec: &ProblemSpec, grid: Arc<SpaceTimeGrid>, config: &SchemeConfig) -> Result<SolveResult> {
    config.validate()?;
    if grid.domain() != &spec.domain || (grid.horizon() - spec.horizon).abs() > 1e-12 {
        return Err(Error::GridMismatch("grid was built for another domain or horizon".into()));
    }
    let m = spec.modes();
    if m < 2 {
        return Err(Error::SingleMode);
    }
    for i in 0..m {
        hjb_mode(&spec.operator, i)?;
    }
    let bound = cfl_bound(&spec.operator, &grid, config.cfl_safety)?;
    let cfl_ratio = grid.dt() / bound;
    if config.mode == SchemeMode::Explicit && grid.dt() > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: grid.dt(), bound });
    }
    let n_nodes = grid.len();
    let max_sweeps = config.sweeps_for(m);
    let mut values = Array3::<f64>::zeros((m, grid.levels(), n_nodes));
    for k in 0..n_nodes {
        let x = &grid.node(k).x;
        let g: Vec<f64> = (0..m).map(|i| spec.initial.eval(i, x)).collect();
        let (p, _) = obstacle_project(&g, &spec.costs, 0.0, x, config.tol_sw, max_sweeps)?;
        for i in 0..m {
            values[[i, 0, k]] = p[i];
        }
    }
    crate::error::ensure_finite("initial data", values.as_slice().unwrap_or(&[]))?;
    let mut sweeps = Vec::with_capacity(grid.steps());
    for n in 0..grid.steps() {
        let prev: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..n_nodes).map(|k| values[[i, n, k]]).collect())
            .collect();
        let (next, count) = match config.mode {
            SchemeMode::Explicit => explicit_step(spec, &grid, config, n, &prev)?,
            SchemeMode::Implicit => implicit_step(spec, &grid, config, n, &prev)?,
        };
        for i in 0..m {
            for k in 0..n_nodes {
                values[[i, n + 1, k]] = next[i][k];
            }
        }
        sweeps.push(count);
    }
    let solution = GridFunction::new(grid.clone(), values)?;
    let active = (0..grid.levels())
        .map(|level| active_count(spec, &solution, level, 10.0 * config.tol_sw))
        .collect();
    let max_complementarity = complementarity_residual(spec, &solution, config.mode)?;
    Ok(SolveResult {
        solution,
        mode: config.mode,
        sweeps,
        active,
        max_complementarity,
        cfl_ratio,
    })
}

fn node_matrix(costs: &SwitchingCosts, t: f64, grid: &SpaceTimeGrid) -> Vec<Vec<f64>> {
    grid.nodes().iter().map(|nd| costs.matrix(t, &nd.x)).collect()
}

fn explicit_step(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    config: &SchemeConfig,
    n: usize,
    prev: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let m = spec.modes();
    let (t0, t1, dt) = (grid.time(n), grid.time(n + 1), grid.dt());
    let interior: Vec<usize> = grid.interior_indices().collect();
    let boundary: Vec<usize> = grid.boundary_indices().collect();
    let mut next = prev.to_vec();
    for i in 0..m {
        let h = hjb_mode(&spec.operator, i)?;
        let view = ArrayView1::from(&prev[i][..]);
        let updated: Vec<Result<f64>> = interior
            .par_iter()
            .map(|&k| Ok(prev[i][k] - dt * stencil_row(h, grid, t0, k)?.apply(view, k)))
            .collect();
        for (&k, v) in interior.iter().zip(updated) {
            next[i][k] = v?;
        }
    }
    let cmat = node_matrix(&spec.costs, t1, grid);
    let max_sweeps = config.sweeps_for(m);
    let mut max_count = 0;
    let mut project = |next: &mut Vec<Vec<f64>>, k: usize| -> Result<()> {
        let cand: Vec<f64> = (0..m).map(|i| next[i][k]).collect();
        let (p, count) = project_with_matrix(&cand, &cmat[k], config.tol_sw, max_sweeps)?;
        max_count = max_count.max(count);
        for i in 0..m {
            next[i][k] = p[i];
        }
        Ok(())
    };
    for &k in &interior {
        project(&mut next, k)?;
    }
    let mut last: Option<Vec<f64>> = None;
    for _ in 0..config.max_rounds.max(1) {
        for &k in &boundary {
            let NodeKind::Boundary { closure, .. } = &grid.node(k).kind else { unreachable!() };
            for i in 0..m {
                let inner: f64 = closure.weights.iter().map(|&(l, w)| w * next[i][l]).sum();
                next[i][k] = neumann_close(inner, closure.distance, &spec.boundary.f[i], t1, &grid.node(k).x)?;
            }
            project(&mut next, k)?;
        }
        let snapshot: Vec<f64> = boundary.iter().flat_map(|&k| (0..m).map(move |i| (i, k))).map(|(i, k)| next[i][k]).collect();
        if let Some(prev_round) = &last {
            let change = snapshot.iter().zip(prev_round).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if change <= config.tol_sw {
                break;
            }
        }
        last = Some(snapshot);
    }
    Ok((next, max_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Pde,
    Switch(usize),
}

/// Row data for one `(mode, node)` unknown.
enum RowKind {
    Interior(StencilRow),
    Boundary { weights: Vec<(usize, f64)>, distance: f64 },
}

const FD_R: f64 = 1e-7;

fn implicit_step(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    config: &SchemeConfig,
    n: usize,
    prev: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let m = spec.modes();
    let nn = grid.len();
    let t1 = grid.time(n + 1);
    let inv_dt = 1.0 / grid.dt();
    let idx = |i: usize, k: usize| i * nn + k;
    let cmat = node_matrix(&spec.costs, t1, grid);
    let mut rows: Vec<Vec<RowKind>> = Vec::with_capacity(m);
    for i in 0..m {
        let h = hjb_mode(&spec.operator, i)?;
        let mut r = Vec::with_capacity(nn);
        for k in 0..nn {
            r.push(match &grid.node(k).kind {
                NodeKind::Interior { .. } => RowKind::Interior(stencil_row(h, grid, t1, k)?),
                NodeKind::Boundary { closure, .. } => RowKind::Boundary {
                    weights: closure.weights.clone(),
                    distance: closure.distance,
                },
            });
        }
        rows.push(r);
    }
    let nonlinear = spec.boundary.f.iter().any(Field::depends_on_r);

    let pde_value = |u: &[f64], i: usize, k: usize| -> f64 {
        match &rows[i][k] {
            RowKind::Interior(row) => {
                let view = ArrayView1::from(&u[i * nn..(i + 1) * nn]);
                (u[idx(i, k)] - prev[i][k]) * inv_dt + row.apply(view, k)
            }
            RowKind::Boundary { weights, distance } => {
                let inner: f64 = weights.iter().map(|&(l, w)| w * u[idx(i, l)]).sum();
                let ub = u[idx(i, k)];
                (ub - inner) / distance + spec.boundary.f[i].eval_r(t1, &grid.node(k).x, ub)
            }
        }
    };
    let switch_value = |u: &[f64], i: usize, j: usize, k: usize| -> f64 {
        u[idx(i, k)] - u[idx(j, k)] + cmat[k][i * m + j]
    };

    let mut policy = vec![Branch::Pde; m * nn];
    let mut u: Vec<f64> = (0..m).flat_map(|i| prev[i].iter().copied()).collect();
    for iter in 1..=config.max_policy_iterations {
        let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(m * nn * 5);
        let mut rhs = vec![0.0; m * nn];
        for i in 0..m {
            for k in 0..nn {
                let r = idx(i, k);
                match policy[r] {
                    Branch::Switch(j) => {
                        trip.push(Triplet::new(r, r, 1.0));
                        trip.push(Triplet::new(r, idx(j, k), -1.0));
                        rhs[r] = -cmat[k][i * m + j];
                    }
                    Branch::Pde => match &rows[i][k] {
                        RowKind::Interior(row) => {
                            trip.push(Triplet::new(r, r, inv_dt + row.diag));
                            for &(l, w) in &row.neighbors {
                                trip.push(Triplet::new(r, idx(i, l), -w));
                            }
                            rhs[r] = prev[i][k] * inv_dt + row.source;
                        }
                        RowKind::Boundary { weights, distance } => {
                            let f = &spec.boundary.f[i];
                            let x = &grid.node(k).x;
                            let u0 = u[r];
                            let f0 = f.eval_r(t1, x, u0);
                            let slope = if f.depends_on_r() {
                                ((f.eval_r(t1, x, u0 + FD_R) - f0) / FD_R).max(0.0)
                            } else {
                                0.0
                            };
                            trip.push(Triplet::new(r, r, 1.0 / distance + slope));
                            for &(l, w) in weights {
                                trip.push(Triplet::new(r, idx(i, l), -w / distance));
                            }
                            rhs[r] = slope * u0 - f0;
                        }
                    },
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(m * nn, m * nn, &trip)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let b = Col::from_fn(m * nn, |r| rhs[r]);
        let sol = lu.solve(&b);
        let u_new: Vec<f64> = (0..m * nn).map(|r| sol[r]).collect();
        crate::error::ensure_finite("implicit step", &u_new)
            .map_err(|_| Error::LinearSolve(format!("non-finite solution at step {}", n + 1)))?;

        let scale = 1.0 + u_new.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let newton_change = u_new.iter().zip(&u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        u = u_new;

        let mut changed = false;
        let threshold = config.linear_tol * scale * (1.0 + inv_dt);
        for k in 0..nn {
            for i in 0..m {
                let r = idx(i, k);
                let current = match policy[r] {
                    Branch::Pde => pde_value(&u, i, k),
                    Branch::Switch(j) => switch_value(&u, i, j, k),
                };
                let mut best = (pde_value(&u, i, k), Branch::Pde);
                for j in 0..m {
                    if j != i {
                        let v = switch_value(&u, i, j, k);
                        if v < best.0 {
                            best = (v, Branch::Switch(j));
                        }
                    }
                }
                if best.1 != policy[r] && best.0 < current - threshold {
                    policy[r] = best.1;
                    changed = true;
                }
            }
            break_switch_cycles(&mut policy[..], m, nn, k);
        }
        let newton_done = !nonlinear || newton_change <= config.linear_tol * scale;
        if !changed && newton_done {
            let next = (0..m).map(|i| u[i * nn..(i + 1) * nn].to_vec()).collect();
            return Ok((next, iter));
        }
    }
    Err(Error::PolicyIteration {
        step: n + 1,
        iterations: config.max_policy_iterations,
    })
}

/// A policy where modes switch around a closed loop has a singular system;
/// the lowest mode on any such loop falls back to its PDE row.
fn break_switch_cycles(policy: &mut [Branch], m: usize, nn: usize, k: usize) {
    for start in 0..m {
        let mut seen = vec![false; m];
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if seen[cur] {
                if let Some(pos) = path.iter().position(|&v| v == cur) {
                    let lowest = *path[pos..].iter().min().unwrap();
                    policy[lowest * nn + k] = Branch::Pde;
                }
                break;
            }
            seen[cur] = true;
            path.push(cur);
            match policy[cur * nn + k] {
                Branch::Switch(j) => cur = j,
                Branch::Pde => break,
            }
        }
    }
}

/// Discrete step residual at an interior node: implicit
/// `(u^{n+1} - u^n)/dt + F_h(t^{n+1}, u^{n+1})`, explicit
/// `(u^{n+1} - u^n)/dt + F_h(t^n, u^n)`.
pub fn step_residual(spec: &ProblemSpec, u: &GridFunction, mode: SchemeMode, i: usize, level: usize, node: usize) -> Result<f64> {
    if level == 0 {
        return Err(Error::Problem("step residual needs level >= 1".into()));
    }
    let grid = u.grid();
    let h = hjb_mode(&spec.operator, i)?;
    let (eval_level, t) = match mode {
        SchemeMode::Implicit => (level, grid.time(level)),
        SchemeMode::Explicit => (level - 1, grid.time(level - 1)),
    };
    let row = stencil_row(h, grid, t, node)?;
    let a = (u.get(i, level, node) - u.get(i, level - 1, node)) / grid.dt();
    Ok(a + row.apply(u.slice(i, eval_level), node))
}

/// `max |min(step residual, u_i - M_i u)|` over interior nodes, modes and levels `>= 1`.
pub fn complementarity_residual(spec: &ProblemSpec, u: &GridFunction, mode: SchemeMode) -> Result<f64> {
    let grid = u.grid();
    let m = spec.modes();
    let mut worst: f64 = 0.0;
    for level in 1..grid.levels() {
        let t = grid.time(level);
        for k in grid.interior_indices() {
            let x = &grid.node(k).x;
            let vals = u.node_values(level, k);
            for i in 0..m {
                let obstacle = crate::problem::eval_obstacle(&vals, &spec.costs, i, t, x)?;
                let e = step_residual(spec, u, mode, i, level, k)?.min(vals[i] - obstacle);
                worst = worst.max(e.abs());
            }
        }
    }
    Ok(worst)
}

/// Number of `(mode, node)` pairs at `level` with `u_i - M_i u <= tol`.
pub fn active_count(spec: &ProblemSpec, u: &GridFunction, level: usize, tol: f64) -> usize {
    let grid = u.grid();
    let t = grid.time(level);
    let mut count = 0;
    for k in 0..grid.len() {
        let vals = u.node_values(level, k);
        for i in 0..vals.len() {
            if let Ok(ob) = crate::problem::eval_obstacle(&vals, &spec.costs, i, t, &grid.node(k).x) {
                if vals[i] - ob <= tol {
                    count += 1;
                }
            }
        }
    }
    count
}

/// CSV with columns `t, x1[, x2], mode, value`; modes are labelled from 1.
pub fn write_solution_csv(out: &mut impl std::io::Write, u: &GridFunction) -> Result<()> {
    let grid = u.grid();
    let mut header = vec!["t".to_string()];
    header.extend((1..=grid.dim()).map(|k| format!("x{k}")));
    header.extend(["mode".into(), "value".into()]);
    writeln!(out, "{}", header.join(","))?;
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for k in 0..grid.len() {
            let xs: Vec<String> = grid.node(k).x.iter().map(|c| format!("{c:.17e}")).collect();
            for i in 0..u.modes() {
                writeln!(out, "{t:.17e},{},{},{:.17e}", xs.join(","), i + 1, u.get(i, level, k))?;
            }
        }
    }
    Ok(())
}

/// Reads a CSV written by [`write_solution_csv`] back onto `grid`.
pub fn read_solution_csv(text: &str, grid: Arc<SpaceTimeGrid>, modes: usize) -> Result<GridFunction> {
    let n = grid.dim();
    let mut values = Array3::<f64>::from_elem((modes, grid.levels(), grid.len()), f64::NAN);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::GridMismatch("empty solution file".into()))?;
    if header.split(',').count() != n + 3 {
        return Err(Error::GridMismatch(format!("header `{header}` does not match dimension {n}")));
    }
    let bad = |line: &str| Error::GridMismatch(format!("malformed solution row `{line}`"));
    let tol = 1e-9 * (1.0 + grid.h());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != n + 3 {
            return Err(bad(line));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(line));
        let t = num(cols[0])?;
        let x: Vec<f64> = cols[1..=n].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let mode: usize = cols[n + 1].trim().parse().map_err(|_| bad(line))?;
        let v = num(cols[n + 2])?;
        let level = (t / grid.dt()).round() as usize;
        if level >= grid.levels() || (grid.time(level) - t).abs() > 1e-9 * (1.0 + t) {
            return Err(Error::GridMismatch(format!("time {t} is not a grid level")));
        }
        let k = grid
            .find_node(&x, tol)
            .ok_or_else(|| Error::GridMismatch(format!("point {x:?} is not a grid node")))?;
        if mode == 0 || mode > modes {
            return Err(Error::GridMismatch(format!("mode {mode} out of range")));
        }
        values[[mode - 1, level, k]] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::GridMismatch("solution file does not cover the grid".into()));
    }
    GridFunction::new(grid, values)
}
