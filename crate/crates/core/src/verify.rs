//! Numerical checks of sub/supersolution inequalities, comparison statements,
//! barrier bracketing and convergence.
//!
//! Residuals use finite-difference probes: central differences in space at
//! interior nodes, one-sided ones at the boundary, backward differences in
//! time. They certify classical pointwise inequalities of grid functions,
//! which is a proxy for the viscosity notion on smooth candidates only.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array3;
use rayon::prelude::*;
use serde::Serialize;

use crate::barriers::{build_phi, sample_barriers, select_constants, BarrierParams};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::probe::{closure_normal_derivative, discrete_probe};
use crate::problem::{eval_pde_residual, ProblemSpec};

/// Default multiplier `C_v` of the residual tolerance `C_v (h + dt)`.
pub const DEFAULT_TOL_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subsolution,
    Supersolution,
}

impl Role {
    /// Positive values violate the role's inequality.
    fn violation(self, value: f64) -> f64 {
        match self {
            Role::Subsolution => value,
            Role::Supersolution => -value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Interior,
    Boundary,
    Initial,
}

/// Where a worst value was found. Modes are labelled from 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Site {
    pub kind: SiteKind,
    pub mode: usize,
    pub level: usize,
    pub node: usize,
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub role: Role,
    pub tolerance: f64,
    pub passed: bool,
    /// Largest violation in the role's sign convention (`<= tolerance` passes).
    pub worst_violation: f64,
    pub worst_site: Option<Site>,
    pub interior_worst: f64,
    pub boundary_worst: f64,
    pub initial_worst: f64,
    /// `E` at interior nodes, `min(E, B)` or `max(E, B)` at boundary nodes,
    /// indexed `(mode, level, node)`; level 0 holds `u_i(0, .) - g_i`.
    #[serde(skip)]
    pub residuals: Array3<f64>,
}

fn check_match(u: &GridFunction, spec: &ProblemSpec) -> Result<()> {
    if u.modes() != spec.modes() {
        return Err(Error::GridMismatch(format!(
            "grid function has {} modes, spec has {}",
            u.modes(),
            spec.modes()
        )));
    }
    if u.grid().domain() != &spec.domain {
        return Err(Error::GridMismatch("grid domain differs from spec domain".into()));
    }
    Ok(())
}

/// Default tolerance `C_v (h + dt)`.
pub fn default_tolerance(grid: &SpaceTimeGrid, factor: f64) -> f64 {
    factor * (grid.h() + grid.dt())
}

/// Discrete sub- or supersolution check of `u` with tolerance `tol`.
pub fn residual_check(u: &GridFunction, spec: &ProblemSpec, role: Role, tol: f64) -> Result<ResidualReport> {
    check_match(u, spec)?;
    let grid = u.grid();
    let (m, levels, nn) = (u.modes(), grid.levels(), grid.len());

    let per_level: Vec<Result<Vec<(usize, usize, f64)>>> = (1..levels)
        .into_par_iter()
        .map(|level| {
            let t = grid.time(level);
            let mut out = Vec::with_capacity(m * nn);
            for k in 0..nn {
                let node = grid.node(k);
                let vals = u.node_values(level, k);
                for i in 0..m {
                    let probe = discrete_probe(u, i, level, k)?;
                    let e = eval_pde_residual(spec, i, t, &node.x, vals[i], &probe, &vals)?;
                    let v = if node.is_boundary() {
                        let dn = closure_normal_derivative(grid, u.slice(i, level), k).unwrap_or(0.0);
                        let b = dn + spec.boundary.f[i].eval_r(t, &node.x, vals[i]);
                        match role {
                            Role::Subsolution => e.min(b),
                            Role::Supersolution => e.max(b),
                        }
                    } else {
                        e
                    };
                    out.push((i, k, v));
                }
            }
            Ok(out)
        })
        .collect();

    let mut residuals = Array3::<f64>::zeros((m, levels, nn));
    let mut report = ResidualReport {
        role,
        tolerance: tol,
        passed: false,
        worst_violation: f64::NEG_INFINITY,
        worst_site: None,
        interior_worst: f64::NEG_INFINITY,
        boundary_worst: f64::NEG_INFINITY,
        initial_worst: f64::NEG_INFINITY,
        residuals: Array3::zeros((0, 0, 0)),
    };
    let record = |report: &mut ResidualReport, kind: SiteKind, i: usize, level: usize, k: usize, v: f64| {
        let viol = role.violation(v);
        let slot = match kind {
            SiteKind::Interior => &mut report.interior_worst,
            SiteKind::Boundary => &mut report.boundary_worst,
            SiteKind::Initial => &mut report.initial_worst,
        };
        *slot = slot.max(viol);
        if viol > report.worst_violation {
            report.worst_violation = viol;
            report.worst_site = Some(Site {
                kind,
                mode: i + 1,
                level,
                node: k,
                t: grid.time(level),
                x: grid.node(k).x.clone(),
            });
        }
    };
    for k in 0..nn {
        let x = &grid.node(k).x;
        for i in 0..m {
            let v = u.get(i, 0, k) - spec.initial.eval(i, x);
            residuals[[i, 0, k]] = v;
            record(&mut report, SiteKind::Initial, i, 0, k, v);
        }
    }
    for (offset, rows) in per_level.into_iter().enumerate() {
        let level = offset + 1;
        for (i, k, v) in rows? {
            residuals[[i, level, k]] = v;
            let kind = if grid.node(k).is_boundary() {
                SiteKind::Boundary
            } else {
                SiteKind::Interior
            };
            record(&mut report, kind, i, level, k, v);
        }
    }
    report.passed = report.worst_violation <= tol;
    report.residuals = residuals;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    FullBoundary,
    NoBoundary,
    MixedRegion,
}

impl std::str::FromStr for ComparisonMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_boundary" => Ok(Self::FullBoundary),
            "no_boundary" => Ok(Self::NoBoundary),
            "mixed_region" => Ok(Self::MixedRegion),
            _ => Err(Error::Config {
                key: "comparison".into(),
                message: format!("unknown comparison mode `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub mode: ComparisonMode,
    pub tolerance: f64,
    pub passed: bool,
    /// `max (u_i - v_i)` over all modes, levels and nodes.
    pub sup_difference: f64,
    pub worst_site: Option<Site>,
    /// `max_k sup (u_k - v_k)^+` over the parabolic boundary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_bound: Option<f64>,
    /// `max (u - v)` on boundary nodes outside the region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_difference: Option<f64>,
}

/// Compares `u` (candidate subsolution) against `v` (candidate supersolution).
///
/// `region` marks the boundary nodes of `G` in mixed mode, indexed by node.
pub fn comparison_check(
    u: &GridFunction,
    v: &GridFunction,
    mode: ComparisonMode,
    region: Option<&[bool]>,
    tol: f64,
) -> Result<ComparisonReport> {
    if u.values().dim() != v.values().dim() || u.grid() != v.grid() && **u.grid() != **v.grid() {
        return Err(Error::GridMismatch("comparison needs both functions on one grid".into()));
    }
    let grid = u.grid();
    let (m, levels, nn) = u.values().dim();
    let mut sup = f64::NEG_INFINITY;
    let mut site = None;
    let mut bound: f64 = 0.0;
    let mut region_diff = f64::NEG_INFINITY;
    if mode == ComparisonMode::MixedRegion {
        let mask = region.ok_or_else(|| Error::Problem("mixed_region comparison needs a region mask".into()))?;
        if mask.len() != nn {
            return Err(Error::GridMismatch(format!("region mask has {} entries, grid has {nn}", mask.len())));
        }
    }
    for i in 0..m {
        for level in 0..levels {
            for k in 0..nn {
                let d = u.get(i, level, k) - v.get(i, level, k);
                if d > sup {
                    sup = d;
                    site = Some(Site {
                        kind: if level == 0 {
                            SiteKind::Initial
                        } else if grid.node(k).is_boundary() {
                            SiteKind::Boundary
                        } else {
                            SiteKind::Interior
                        },
                        mode: i + 1,
                        level,
                        node: k,
                        t: grid.time(level),
                        x: grid.node(k).x.clone(),
                    });
                }
                let on_parabolic_boundary = level == 0 || grid.node(k).is_boundary();
                if on_parabolic_boundary {
                    bound = bound.max(d.max(0.0));
                }
                if let Some(mask) = region {
                    if level > 0 && grid.node(k).is_boundary() && !mask[k] {
                        region_diff = region_diff.max(d);
                    }
                }
            }
        }
    }
    let (passed, boundary_bound, region_difference) = match mode {
        ComparisonMode::FullBoundary => (sup <= tol, None, None),
        ComparisonMode::NoBoundary => (sup <= bound + tol, Some(bound), None),
        ComparisonMode::MixedRegion => (region_diff <= tol && sup <= tol, None, Some(region_diff)),
    };
    Ok(ComparisonReport {
        mode,
        tolerance: tol,
        passed,
        sup_difference: sup,
        worst_site: site,
        boundary_bound,
        region_difference,
    })
}

/// Reference for a convergence study.
pub enum Reference<'a> {
    /// Exact solution `w(mode, t, x)`.
    Exact(&'a (dyn Fn(usize, f64, &[f64]) -> f64 + Sync)),
    /// Solution on a finer grid whose nodes contain every coarse node.
    Fine(&'a GridFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; absent on the first row.
    pub rate: Option<f64>,
}

/// L-infinity errors at the final time over all modes, with observed rates.
pub fn convergence_study(
    grids: &[Arc<SpaceTimeGrid>],
    mut solve: impl FnMut(&Arc<SpaceTimeGrid>) -> Result<GridFunction>,
    reference: Reference<'_>,
) -> Result<Vec<StudyRow>> {
    if grids.len() < 2 {
        return Err(Error::Study(format!("need at least 2 grids, got {}", grids.len())));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(grids.len());
    for grid in grids {
        let u = solve(grid)?;
        let last = grid.steps();
        let t = grid.time(last);
        let mut err: f64 = 0.0;
        for k in 0..grid.len() {
            let x = &grid.node(k).x;
            let fine_k = match &reference {
                Reference::Fine(f) => Some(
                    f.grid()
                        .find_node(x, 1e-9 * (1.0 + grid.h()))
                        .ok_or_else(|| Error::Study(format!("reference grid has no node at {x:?}")))?,
                ),
                Reference::Exact(_) => None,
            };
            for i in 0..u.modes() {
                let r = match (&reference, fine_k) {
                    (Reference::Exact(w), _) => w(i, t, x),
                    (Reference::Fine(f), Some(fk)) => f.get(i, f.grid().steps(), fk),
                    _ => unreachable!(),
                };
                err = err.max((u.get(i, last, k) - r).abs());
            }
        }
        let rate = rows.last().map(|p| (p.error / err).ln() / (p.h / grid.h()).ln());
        rows.push(StudyRow {
            h: grid.h(),
            dt: grid.dt(),
            error: err,
            rate,
        });
    }
    Ok(rows)
}

/// CSV with columns `h, dt, error, rate`.
pub fn write_study_csv(out: &mut impl Write, rows: &[StudyRow]) -> Result<()> {
    writeln!(out, "h,dt,error,rate")?;
    for r in rows {
        let rate = r.rate.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{:.17e},{:.17e},{:.17e},{rate}", r.h, r.dt, r.error)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AnchorMargin {
    pub anchor: Vec<f64>,
    /// Anchor mode, labelled from 1.
    pub mode: usize,
    pub eps: f64,
    /// `min (u - U)`.
    pub lower: f64,
    /// `min (V - u)`.
    pub upper: f64,
    pub worst_site: Option<Site>,
    /// Both barrier tables passed their own residual checks.
    pub reliable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    pub tolerance: f64,
    pub passed: bool,
    /// False when some barrier table failed its residual check.
    pub reliable: bool,
    pub min_margin: f64,
    pub anchors: Vec<AnchorMargin>,
}

/// `U <= u <= V` for barriers built at each anchor `(x, mode)` with `eps`.
pub fn bracket_check(
    solution: &GridFunction,
    spec: &ProblemSpec,
    anchors: &[(Vec<f64>, usize)],
    eps: f64,
    tol: f64,
) -> Result<BracketReport> {
    check_match(solution, spec)?;
    let phi = build_phi(&spec.domain)?;
    let params = anchors
        .iter()
        .map(|(x, i)| select_constants(spec, &phi, solution.grid(), x, *i, eps))
        .collect::<Result<Vec<_>>>()?;
    bracket_with_params(solution, spec, &params, tol)
}

/// Bracketing against caller-supplied barrier constants.
pub fn bracket_with_params(
    solution: &GridFunction,
    spec: &ProblemSpec,
    params: &[BarrierParams],
    tol: f64,
) -> Result<BracketReport> {
    check_match(solution, spec)?;
    let grid = solution.grid();
    let res_tol = default_tolerance(grid, DEFAULT_TOL_FACTOR);
    let mut anchors = Vec::with_capacity(params.len());
    for p in params {
        let (lo, hi) = sample_barriers(p, spec, grid)?;
        let reliable = residual_check(&hi, spec, Role::Supersolution, res_tol)?.passed
            && residual_check(&lo, spec, Role::Subsolution, res_tol)?.passed;
        let mut lower = f64::INFINITY;
        let mut upper = f64::INFINITY;
        let mut worst = f64::INFINITY;
        let mut site = None;
        let (m, levels, nn) = solution.values().dim();
        for i in 0..m {
            for level in 0..levels {
                for k in 0..nn {
                    let u = solution.get(i, level, k);
                    let a = u - lo.get(i, level, k);
                    let b = hi.get(i, level, k) - u;
                    lower = lower.min(a);
                    upper = upper.min(b);
                    if a.min(b) < worst {
                        worst = a.min(b);
                        site = Some(Site {
                            kind: if level == 0 {
                                SiteKind::Initial
                            } else if grid.node(k).is_boundary() {
                                SiteKind::Boundary
                            } else {
                                SiteKind::Interior
                            },
                            mode: i + 1,
                            level,
                            node: k,
                            t: grid.time(level),
                            x: grid.node(k).x.clone(),
                        });
                    }
                }
            }
        }
        anchors.push(AnchorMargin {
            anchor: p.anchor.clone(),
            mode: p.anchor_mode + 1,
            eps: p.eps,
            lower,
            upper,
            worst_site: site,
            reliable,
        });
    }
    let min_margin = anchors
        .iter()
        .map(|a| a.lower.min(a.upper))
        .fold(f64::INFINITY, f64::min);
    Ok(BracketReport {
        tolerance: tol,
        passed: min_margin >= -tol,
        reliable: anchors.iter().all(|a| a.reliable),
        min_margin,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::field::Field;
    use crate::problem::{BoundaryData, HjbOperator, InitialData, OperatorSpec, SwitchingCosts};

    fn spec(src: f64) -> ProblemSpec {
        ProblemSpec::new(
            Domain::interval(0.0, 1.0).unwrap(),
            0.5,
            OperatorSpec::hjb(vec![HjbOperator::heat_like(1.0, 1.0, Field::constant(src)); 2]),
            SwitchingCosts::uniform(2, 0.5),
            BoundaryData::homogeneous(2),
            InitialData::new(vec![Field::constant(0.0); 2]),
        )
        .unwrap()
    }

    fn grid() -> Arc<SpaceTimeGrid> {
        Arc::new(SpaceTimeGrid::new(&Domain::interval(0.0, 1.0).unwrap(), 0.5, 0.1, 0.05).unwrap())
    }

    #[test]
    fn constant_function_below_its_source_is_not_a_subsolution() {
        // u = 0, l = -2: E = min(0 + 2, 0 - (0 - 0.5)) = 0.5 > 0.
        // With l = 2 the PDE branch is -2 and the check passes.
        let s = spec(-2.0);
        let u = GridFunction::zeros(grid(), 2);
        let r = residual_check(&u, &s, Role::Subsolution, 0.1).unwrap();
        assert!(!r.passed);
        assert!((r.interior_worst - 0.5).abs() < 1e-12);
        assert_eq!(r.worst_site.as_ref().unwrap().kind, SiteKind::Interior);
        let ok = residual_check(&u, &spec(2.0), Role::Subsolution, 0.1).unwrap();
        assert!(ok.passed);
    }

    #[test]
    fn comparison_identity_and_shift() {
        let g = grid();
        let u = GridFunction::from_fn(g.clone(), 2, |i, t, x| i as f64 + t * x[0]).unwrap();
        let shifted = u.map_with_time(|_, v| v + 1.0).unwrap();
        let mask = vec![false; g.len()];
        for mode in [ComparisonMode::FullBoundary, ComparisonMode::NoBoundary, ComparisonMode::MixedRegion] {
            let r = comparison_check(&u, &u, mode, Some(&mask), 1e-12).unwrap();
            assert!(r.passed && r.sup_difference == 0.0);
        }
        let full = comparison_check(&shifted, &u, ComparisonMode::FullBoundary, None, 1e-12).unwrap();
        assert!(!full.passed);
        let nb = comparison_check(&shifted, &u, ComparisonMode::NoBoundary, None, 1e-12).unwrap();
        assert!(nb.passed);
        assert!((nb.sup_difference - 1.0).abs() < 1e-12);
        assert!((nb.boundary_bound.unwrap() - 1.0).abs() < 1e-12);
        assert!(comparison_check(&u, &u, ComparisonMode::MixedRegion, None, 1e-12).is_err());
    }

    #[test]
    fn study_needs_two_grids() {
        let g = grid();
        let zero = |_: usize, _: f64, _: &[f64]| 0.0;
        let r = convergence_study(&[g], |g| Ok(GridFunction::zeros(g.clone(), 2)), Reference::Exact(&zero));
        assert!(matches!(r, Err(Error::Study(_))));
    }

    #[test]
    fn study_rates_for_known_errors() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let grids: Vec<_> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| Arc::new(SpaceTimeGrid::new(&d, 0.5, h, h).unwrap()))
            .collect();
        let exact = |_: usize, _: f64, _: &[f64]| 0.0;
        let rows = convergence_study(
            &grids,
            |g| {
                let h = g.h();
                GridFunction::from_fn(g.clone(), 1, move |_, _, _| h * h)
            },
            Reference::Exact(&exact),
        )
        .unwrap();
        assert!(rows[0].rate.is_none());
        for r in &rows[1..] {
            assert!((r.rate.unwrap() - 2.0).abs() < 1e-9);
        }
        let mut buf = Vec::new();
        write_study_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("h,dt,error,rate\n"));
    }
}
