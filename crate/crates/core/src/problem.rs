//! Problem data for the switching system
//!
//! ```text
//! min{ d_t u_i + F_i(t, x, u_i, D u_i, D^2 u_i), u_i - M_i u } = 0   in (0,T) x Omega
//! <n(x), D u_i> + f_i(t, x, u_i) = 0                                 on (0,T) x dOmega
//! u_i(0, x) = g_i(x)
//! ```
//!
//! with the interconnected obstacle `M_i u = max_{j != i} (u_j - c_ij)`.
//!
//! Sign convention: the equation reads `d_t u + F = 0` and the built-in family is
//! `F = -trace(a X) - b.p + lambda r - l`, so the heat equation has
//! `F = -trace(X)`. Flipping this sign silently swaps sub- and supersolutions.

use std::fmt;
use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{ensure_finite, Error, Result};
use crate::field::Field;
use crate::grid::SpaceTimeGrid;
use crate::probe::DerivativeProbe;

/// Safety factor applied to every sampled supremum.
pub const SAMPLED_SAFETY: f64 = 1.1;

const FD_FIRST: f64 = 1e-6;
const FD_SECOND: f64 = 1e-4;

/// Switching cost field `c_ij(t, x)`, stored row-major.
#[derive(Debug, Clone)]
pub struct SwitchingCosts {
    modes: usize,
    entries: Vec<Field>,
    declared: Option<CostBounds>,
}

/// Bounds on cost derivatives used by the barrier construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBounds {
    /// `sup |d_t c_ij|`
    pub time_derivative: f64,
    /// `sup |D_x c_ij|`
    pub gradient: f64,
}

impl SwitchingCosts {
    pub fn new(modes: usize, entries: Vec<Field>) -> Result<Self> {
        if modes == 0 || entries.len() != modes * modes {
            return Err(Error::Problem(format!(
                "cost matrix needs {} entries for {modes} modes, got {}",
                modes * modes,
                entries.len()
            )));
        }
        Ok(Self {
            modes,
            entries,
            declared: None,
        })
    }

    /// Constant costs from a full matrix (diagonal taken as given).
    pub fn constant(matrix: &[Vec<f64>]) -> Result<Self> {
        let m = matrix.len();
        if matrix.iter().any(|row| row.len() != m) {
            return Err(Error::Problem("cost matrix must be square".into()));
        }
        let entries = matrix.iter().flatten().map(|&c| Field::constant(c)).collect();
        Self::new(m, entries)
    }

    /// Zero diagonal, `c` everywhere else.
    pub fn uniform(modes: usize, c: f64) -> Self {
        let entries = (0..modes * modes)
            .map(|k| Field::constant(if k / modes == k % modes { 0.0 } else { c }))
            .collect();
        Self {
            modes,
            entries,
            declared: None,
        }
    }

    pub fn with_declared_bounds(mut self, bounds: CostBounds) -> Self {
        self.declared = Some(bounds);
        self
    }

    pub fn declared_bounds(&self) -> Option<CostBounds> {
        self.declared
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn field(&self, i: usize, j: usize) -> &Field {
        &self.entries[i * self.modes + j]
    }

    pub fn fields(&self) -> &[Field] {
        &self.entries
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize, t: f64, x: &[f64]) -> f64 {
        self.entries[i * self.modes + j].eval(t, x)
    }

    /// Full matrix at `(t, x)`, row-major.
    pub fn matrix(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|c| c.eval(t, x)).collect()
    }

    /// Central-difference `d_t c_ij`.
    pub fn time_derivative(&self, i: usize, j: usize, t: f64, x: &[f64]) -> f64 {
        let c = self.field(i, j);
        (c.eval(t + FD_FIRST, x) - c.eval(t - FD_FIRST, x)) / (2.0 * FD_FIRST)
    }

    /// Central-difference `D_x c_ij`.
    pub fn gradient(&self, i: usize, j: usize, t: f64, x: &[f64]) -> Vec<f64> {
        let c = self.field(i, j);
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                y[k] = x[k] + FD_FIRST;
                let up = c.eval(t, &y);
                y[k] = x[k] - FD_FIRST;
                let down = c.eval(t, &y);
                y[k] = x[k];
                (up - down) / (2.0 * FD_FIRST)
            })
            .collect()
    }

    /// Central-difference `D^2_x c_ij`, row-major.
    pub fn hessian(&self, i: usize, j: usize, t: f64, x: &[f64]) -> Vec<f64> {
        let c = self.field(i, j);
        let n = x.len();
        let e = FD_SECOND;
        let mut out = vec![0.0; n * n];
        let at = |dk: (usize, f64), dl: (usize, f64)| {
            let mut y = x.to_vec();
            y[dk.0] += dk.1;
            y[dl.0] += dl.1;
            c.eval(t, &y)
        };
        let c0 = c.eval(t, x);
        for k in 0..n {
            out[k * n + k] = (at((k, e), (k, 0.0)) - 2.0 * c0 + at((k, -e), (k, 0.0))) / (e * e);
            for l in 0..k {
                let v = (at((k, e), (l, e)) - at((k, e), (l, -e)) - at((k, -e), (l, e))
                    + at((k, -e), (l, -e)))
                    / (4.0 * e * e);
                out[k * n + l] = v;
                out[l * n + k] = v;
            }
        }
        out
    }

    /// Declared bounds, or sampled suprema over nodes, midpoints and
    /// half-steps times the safety factor.
    pub fn bounds(&self, grid: &SpaceTimeGrid) -> CostBounds {
        if let Some(b) = self.declared {
            return b;
        }
        let points = grid.sample_points();
        let times = grid.sample_times();
        let mut dt_sup: f64 = 0.0;
        let mut dx_sup: f64 = 0.0;
        for &t in &times {
            for x in &points {
                for i in 0..self.modes {
                    for j in 0..self.modes {
                        if i == j {
                            continue;
                        }
                        dt_sup = dt_sup.max(self.time_derivative(i, j, t, x).abs());
                        let g = self.gradient(i, j, t, x);
                        dx_sup = dx_sup.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
                    }
                }
            }
        }
        CostBounds {
            time_derivative: SAMPLED_SAFETY * dt_sup,
            gradient: SAMPLED_SAFETY * dx_sup,
        }
    }
}

/// Built-in family `F(t,x,r,p,X) = -trace(a X) - b.p + lambda r - l`.
#[derive(Debug, Clone)]
pub struct HjbOperator {
    /// Diffusion matrix `a(t,x)`, row-major `n x n`.
    pub diffusion: Vec<Field>,
    /// Drift `b(t,x)`.
    pub drift: Vec<Field>,
    /// Zeroth-order coefficient; must be positive.
    pub lambda: f64,
    /// Source `l(t,x)`.
    pub source: Field,
}

impl HjbOperator {
    /// Operator with diagonal diffusion `diag(a_1, ..., a_n)`.
    pub fn diagonal(diffusion: Vec<Field>, drift: Vec<Field>, lambda: f64, source: Field) -> Self {
        let n = diffusion.len();
        let mut full = Vec::with_capacity(n * n);
        for k in 0..n {
            for l in 0..n {
                full.push(if k == l {
                    diffusion[k].clone()
                } else {
                    Field::constant(0.0)
                });
            }
        }
        Self {
            diffusion: full,
            drift,
            lambda,
            source,
        }
    }

    /// `-a u'' + lambda u - l` in one dimension with constant coefficients.
    pub fn heat_like(a: f64, lambda: f64, source: Field) -> Self {
        Self::diagonal(vec![Field::constant(a)], vec![Field::constant(0.0)], lambda, source)
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn diffusion_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.diffusion.iter().map(|f| f.eval(t, x)).collect()
    }

    pub fn drift_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.drift.iter().map(|f| f.eval(t, x)).collect()
    }

    pub fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], hess: &[f64]) -> f64 {
        let n = p.len();
        let mut trace = 0.0;
        for k in 0..n {
            for l in 0..n {
                trace += self.diffusion[k * n + l].eval(t, x) * hess[l * n + k];
            }
        }
        let drift: f64 = self.drift.iter().zip(p).map(|(b, pk)| b.eval(t, x) * pk).sum();
        -trace - drift + self.lambda * r - self.source.eval(t, x)
    }
}

pub type OpaqueFn = dyn Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// Black-box operator `F(t, x, r, p, X)` with a declared monotonicity constant.
#[derive(Clone)]
pub struct OpaqueOperator {
    pub name: String,
    pub gamma: f64,
    eval: Arc<OpaqueFn>,
}

impl OpaqueOperator {
    pub fn new(
        name: impl Into<String>,
        gamma: f64,
        f: impl Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            gamma,
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], hess: &[f64]) -> f64 {
        (self.eval)(t, x, r, p, hess)
    }
}

impl fmt::Debug for OpaqueOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpaqueOperator")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ModeOperator {
    Hjb(HjbOperator),
    Opaque(OpaqueOperator),
}

impl ModeOperator {
    pub fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], hess: &[f64]) -> f64 {
        match self {
            ModeOperator::Hjb(op) => op.eval(t, x, r, p, hess),
            ModeOperator::Opaque(op) => op.eval(t, x, r, p, hess),
        }
    }

    /// `lambda` for the built-in family, the declared `gamma` otherwise.
    pub fn monotonicity_constant(&self) -> f64 {
        match self {
            ModeOperator::Hjb(op) => op.lambda,
            ModeOperator::Opaque(op) => op.gamma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub modes: Vec<ModeOperator>,
}

impl OperatorSpec {
    pub fn new(modes: Vec<ModeOperator>) -> Self {
        Self { modes }
    }

    pub fn hjb(modes: Vec<HjbOperator>) -> Self {
        Self {
            modes: modes.into_iter().map(ModeOperator::Hjb).collect(),
        }
    }

    pub fn mode(&self, i: usize) -> &ModeOperator {
        &self.modes[i]
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Neumann data `f_i(t, x, r)`; the boundary operator is `<n, p> + f_i`.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub f: Vec<Field>,
}

impl BoundaryData {
    pub fn new(f: Vec<Field>) -> Self {
        Self { f }
    }

    pub fn homogeneous(modes: usize) -> Self {
        Self {
            f: vec![Field::constant(0.0); modes],
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub g: Vec<Field>,
}

impl InitialData {
    pub fn new(g: Vec<Field>) -> Self {
        Self { g }
    }

    pub fn eval(&self, i: usize, x: &[f64]) -> f64 {
        self.g[i].eval(0.0, x)
    }
}

/// One complete instance of the boundary value problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub horizon: f64,
    pub operator: OperatorSpec,
    pub costs: SwitchingCosts,
    pub boundary: BoundaryData,
    pub initial: InitialData,
}

impl ProblemSpec {
    pub fn new(
        domain: Domain,
        horizon: f64,
        operator: OperatorSpec,
        costs: SwitchingCosts,
        boundary: BoundaryData,
        initial: InitialData,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Problem(format!("horizon must be > 0, got {horizon}")));
        }
        let m = costs.modes();
        let counts = [
            ("operator", operator.len()),
            ("boundary", boundary.f.len()),
            ("initial", initial.g.len()),
        ];
        for (what, count) in counts {
            if count != m {
                return Err(Error::Problem(format!(
                    "{what} data has {count} modes, costs have {m}"
                )));
            }
        }
        let n = domain.dim();
        for (i, op) in operator.modes.iter().enumerate() {
            if let ModeOperator::Hjb(op) = op {
                if op.drift.len() != n || op.diffusion.len() != n * n {
                    return Err(Error::Problem(format!(
                        "mode {}: coefficients do not match dimension {n}",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            domain,
            horizon,
            operator,
            costs,
            boundary,
            initial,
        })
    }

    pub fn modes(&self) -> usize {
        self.costs.modes()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_initial(&self, initial: InitialData) -> Result<Self> {
        Self::new(
            self.domain.clone(),
            self.horizon,
            self.operator.clone(),
            self.costs.clone(),
            self.boundary.clone(),
            initial,
        )
    }

    pub fn with_costs(&self, costs: SwitchingCosts) -> Result<Self> {
        Self::new(
            self.domain.clone(),
            self.horizon,
            self.operator.clone(),
            costs,
            self.boundary.clone(),
            self.initial.clone(),
        )
    }
}

/// Obstacle value and the lowest index attaining it.
pub fn obstacle_argmax(
    u_values: &[f64],
    costs: &SwitchingCosts,
    i: usize,
    t: f64,
    x: &[f64],
) -> Result<(f64, usize)> {
    let m = u_values.len();
    if m < 2 {
        return Err(Error::SingleMode);
    }
    if i >= m || costs.modes() != m {
        return Err(Error::ModeIndex { index: i, modes: m });
    }
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (j, &uj) in u_values.iter().enumerate() {
        if j == i {
            continue;
        }
        let v = uj - costs.cost(i, j, t, x);
        if v > best.0 {
            best = (v, j);
        }
    }
    Ok(best)
}

/// `M_i u = max_{j != i} (u_j - c_ij(t, x))`.
pub fn eval_obstacle(u_values: &[f64], costs: &SwitchingCosts, i: usize, t: f64, x: &[f64]) -> Result<f64> {
    obstacle_argmax(u_values, costs, i, t, x).map(|(v, _)| v)
}

/// `B_i = <n(x), p> + f_i(t, x, r)` at a boundary point.
pub fn eval_boundary_operator(
    spec: &ProblemSpec,
    i: usize,
    t: f64,
    x: &[f64],
    r: f64,
    p: &[f64],
) -> Result<f64> {
    let n = spec.domain.normal(x)?;
    ensure_finite("boundary operator input", &[t, r])?;
    ensure_finite("boundary operator gradient", p)?;
    let f = spec.boundary.f.get(i).ok_or(Error::ModeIndex {
        index: i,
        modes: spec.modes(),
    })?;
    let dot: f64 = n.iter().zip(p).map(|(a, b)| a * b).sum();
    Ok(dot + f.eval_r(t, x, r))
}

/// `min{ a + F_i(t, x, r, p, X), r - M_i u }`.
pub fn eval_pde_residual(
    spec: &ProblemSpec,
    i: usize,
    t: f64,
    x: &[f64],
    r: f64,
    probe: &DerivativeProbe,
    u_all: &[f64],
) -> Result<f64> {
    ensure_finite("pde residual input", &[t, r])?;
    ensure_finite("pde residual point", x)?;
    ensure_finite("pde residual components", u_all)?;
    if i >= spec.modes() {
        return Err(Error::ModeIndex {
            index: i,
            modes: spec.modes(),
        });
    }
    let op = spec
        .operator
        .mode(i)
        .eval(t, x, r, &probe.p, &probe.hess);
    let obstacle = eval_obstacle(u_all, &spec.costs, i, t, x)?;
    Ok((probe.a + op).min(r - obstacle))
}

/// Exponential rescaling `u -> e^{lb t} u` of the whole problem.
///
/// Replaces `F_i` by `-lb r + e^{lb t} F_i(t, x, e^{-lb t} r, e^{-lb t} p, e^{-lb t} X)`,
/// `f_i` by `e^{lb t} f_i(t, x, e^{-lb t} r)` and `c_ij` by `e^{lb t} c_ij`.
/// The built-in family stays built-in with `lambda - lb` and source `e^{lb t} l`.
pub fn normalize_monotonicity(spec: &ProblemSpec, lambda_bar: f64) -> Result<ProblemSpec> {
    ensure_finite("lambda_bar", &[lambda_bar])?;
    if lambda_bar == 0.0 {
        return Ok(spec.clone());
    }
    let lb = lambda_bar;
    let operator = OperatorSpec::new(
        spec.operator
            .modes
            .iter()
            .map(|op| match op {
                ModeOperator::Hjb(h) => {
                    let src = h.source.clone();
                    ModeOperator::Hjb(HjbOperator {
                        diffusion: h.diffusion.clone(),
                        drift: h.drift.clone(),
                        lambda: h.lambda - lb,
                        source: Field::tx(move |t, x| (lb * t).exp() * src.eval(t, x)),
                    })
                }
                ModeOperator::Opaque(o) => {
                    let inner = o.clone();
                    ModeOperator::Opaque(OpaqueOperator::new(
                        format!("{} (rescaled)", o.name),
                        o.gamma - lb,
                        move |t, x, r, p, hess| {
                            let s = (-lb * t).exp();
                            let p: Vec<f64> = p.iter().map(|v| s * v).collect();
                            let hs: Vec<f64> = hess.iter().map(|v| s * v).collect();
                            -lb * r + (lb * t).exp() * inner.eval(t, x, s * r, &p, &hs)
                        },
                    ))
                }
            })
            .collect(),
    );
    let boundary = BoundaryData::new(
        spec.boundary
            .f
            .iter()
            .map(|f| {
                let f = f.clone();
                Field::txr(move |t, x, r| (lb * t).exp() * f.eval_r(t, x, (-lb * t).exp() * r))
            })
            .collect(),
    );
    let costs = SwitchingCosts::new(
        spec.modes(),
        spec.costs
            .fields()
            .iter()
            .map(|c| {
                let c = c.clone();
                Field::tx(move |t, x| (lb * t).exp() * c.eval(t, x))
            })
            .collect(),
    )?;
    ProblemSpec::new(
        spec.domain.clone(),
        spec.horizon,
        operator,
        costs,
        boundary,
        spec.initial.clone(),
    )
}

/// `u -> e^{lb t} u`, mapping solutions of the original problem to the rescaled one.
pub fn scale_solution(u: &crate::grid::GridFunction, lambda_bar: f64) -> Result<crate::grid::GridFunction> {
    ensure_finite("lambda_bar", &[lambda_bar])?;
    u.map_with_time(|t, v| (lambda_bar * t).exp() * v)
}

/// Inverse of [`scale_solution`].
pub fn unscale_solution(u: &crate::grid::GridFunction, lambda_bar: f64) -> Result<crate::grid::GridFunction> {
    ensure_finite("lambda_bar", &[lambda_bar])?;
    u.map_with_time(|t, v| (-lambda_bar * t).exp() * v)
}
