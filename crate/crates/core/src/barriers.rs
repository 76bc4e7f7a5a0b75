//! Explicit sub- and supersolution barriers anchored at a point of the initial
//! data.
//!
//! ```text
//! U_j(t, x) = g_j(xa) - A (phi(x) - phi(xa)) - B exp(k phi(x)) |x - xa|^2 - eps - C t
//! V_j(t, x) = g_i(xa) + A (phi(x) - phi(xa)) + B exp(k phi(x)) |x - xa|^2 + eps + C t + c_ij(t, x)
//! ```
//!
//! `phi` has outward normal slope at least 1 on the boundary. Constants are
//! chosen in the order `A~, A, B, kappa, C` from sampled suprema padded by
//! [`SAMPLED_SAFETY`], then re-verified on the samples.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array3;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::probe::spatial_derivatives;
use crate::problem::{ProblemSpec, SAMPLED_SAFETY};

/// Largest admissible value of `exp(kappa * phi)`.
pub const OVERFLOW_GUARD: f64 = 1e300;
/// Lower bound on `A~`.
pub const A_TILDE_FLOOR: f64 = 1.0;
/// Relative slack added to `kappa` beyond `2 / r`.
pub const KAPPA_SAFETY: f64 = 0.1;
const B_LIMIT: f64 = 1e12;
const RECHECK_TOL: f64 = 1e-9;

/// `phi(x) = |x - z|^2 / r` with `z` the centre and `r` the interior ball
/// radius. On intervals this is `(2 / L) (x - mid)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    center: Vec<f64>,
    radius: f64,
    /// Sampled `min <n, D phi>` over the boundary.
    pub slope: f64,
    /// `sup (|D phi| + ||D^2 phi||)`.
    pub bound: f64,
}

impl PhiFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        sq_dist(x, &self.center) / self.radius
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(a, z)| 2.0 * (a - z) / self.radius)
            .collect()
    }

    pub fn hessian(&self) -> Vec<f64> {
        let n = self.center.len();
        let mut h = vec![0.0; n * n];
        for k in 0..n {
            h[k * n + k] = 2.0 / self.radius;
        }
        h
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn boundary_samples(domain: &Domain) -> Vec<Vec<f64>> {
    match domain {
        Domain::Interval { lower, upper } => vec![vec![*lower], vec![*upper]],
        Domain::Ball { center, radius } => match center.len() {
            1 => vec![vec![center[0] - radius], vec![center[0] + radius]],
            _ => (0..64)
                .map(|k| {
                    let th = k as f64 * std::f64::consts::TAU / 64.0;
                    let mut x = center.clone();
                    x[0] += radius * th.cos();
                    x[1] += radius * th.sin();
                    x
                })
                .collect(),
        },
    }
}

/// Builds `phi` and certifies `<n, D phi> >= 1` on sampled boundary points.
pub fn build_phi(domain: &Domain) -> Result<PhiFunction> {
    if domain.dim() > 2 {
        return Err(Error::UnsupportedDomain(format!(
            "{} in dimension {}",
            domain.family(),
            domain.dim()
        )));
    }
    let radius = domain.ball_radius();
    let mut phi = PhiFunction {
        center: domain.center(),
        radius,
        slope: f64::INFINITY,
        bound: 2.0 + 2.0 / radius,
    };
    for x in boundary_samples(domain) {
        let n = domain.normal(&x)?;
        let s: f64 = n.iter().zip(phi.gradient(&x)).map(|(a, b)| a * b).sum();
        phi.slope = phi.slope.min(s);
    }
    if phi.slope < 1.0 {
        return Err(Error::ConstantSelection(format!(
            "boundary slope of phi is {} < 1",
            phi.slope
        )));
    }
    Ok(phi)
}

/// Constants and anchor of one barrier pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierParams {
    pub anchor: Vec<f64>,
    /// Mode whose initial value anchors every `V_j`.
    pub anchor_mode: usize,
    pub a_tilde: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
    pub eps: f64,
    pub phi: PhiFunction,
}

impl BarrierParams {
    /// Params with caller-supplied constants and no checks beyond finiteness.
    /// Intended for tests and for studying deliberately broken barriers.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        phi: PhiFunction,
        anchor: Vec<f64>,
        anchor_mode: usize,
        a: f64,
        b: f64,
        c: f64,
        kappa: f64,
        eps: f64,
    ) -> Result<Self> {
        crate::error::ensure_finite("barrier constants", &[a, b, c, kappa, eps])?;
        Ok(Self {
            anchor,
            anchor_mode,
            a_tilde: a,
            a,
            b,
            c,
            kappa,
            eps,
            phi,
        })
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    /// `A (phi(x) - phi(xa)) + B exp(k phi(x)) |x - xa|^2`.
    fn displacement(&self, x: &[f64]) -> f64 {
        let phi = self.phi.value(x);
        self.a * (phi - self.phi.value(&self.anchor))
            + self.b * (self.kappa * phi).exp() * sq_dist(x, &self.anchor)
    }

    /// Gradient and Hessian of the displacement.
    fn displacement_derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let dphi = self.phi.gradient(x);
        let d2phi = self.phi.hessian();
        let d: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        let s = sq_dist(x, &self.anchor);
        let e = (self.kappa * self.phi.value(x)).exp();
        let k = self.kappa;
        let grad = (0..n)
            .map(|l| self.a * dphi[l] + self.b * e * (k * s * dphi[l] + 2.0 * d[l]))
            .collect();
        let mut hess = vec![0.0; n * n];
        for r in 0..n {
            for l in 0..n {
                let id = if r == l { 2.0 } else { 0.0 };
                let inner = id
                    + k * s * d2phi[r * n + l]
                    + 2.0 * k * (d[r] * dphi[l] + dphi[r] * d[l])
                    + k * k * s * dphi[r] * dphi[l];
                hess[r * n + l] = self.a * d2phi[r * n + l] + self.b * e * inner;
            }
        }
        (grad, hess)
    }
}

/// `U_j(t, x)`.
pub fn eval_barrier_sub(params: &BarrierParams, spec: &ProblemSpec, j: usize, t: f64, x: &[f64]) -> f64 {
    spec.initial.eval(j, &params.anchor) - params.displacement(x) - params.eps - params.c * t
}

/// `V_j(t, x)`.
pub fn eval_barrier_super(params: &BarrierParams, spec: &ProblemSpec, j: usize, t: f64, x: &[f64]) -> f64 {
    let i = params.anchor_mode;
    spec.initial.eval(i, &params.anchor)
        + params.displacement(x)
        + params.eps
        + params.c * t
        + spec.costs.cost(i, j, t, x)
}

/// Value, time derivative, gradient and Hessian of a barrier component.
#[derive(Debug, Clone)]
pub struct BarrierJet {
    pub value: f64,
    pub a: f64,
    pub p: Vec<f64>,
    pub hess: Vec<f64>,
}

pub fn barrier_jet(params: &BarrierParams, spec: &ProblemSpec, upper: bool, j: usize, t: f64, x: &[f64]) -> BarrierJet {
    let (gd, hd) = params.displacement_derivatives(x);
    if upper {
        let i = params.anchor_mode;
        let gc = spec.costs.gradient(i, j, t, x);
        let hc = spec.costs.hessian(i, j, t, x);
        BarrierJet {
            value: eval_barrier_super(params, spec, j, t, x),
            a: params.c + spec.costs.time_derivative(i, j, t, x),
            p: gd.iter().zip(&gc).map(|(a, b)| a + b).collect(),
            hess: hd.iter().zip(&hc).map(|(a, b)| a + b).collect(),
        }
    } else {
        BarrierJet {
            value: eval_barrier_sub(params, spec, j, t, x),
            a: -params.c,
            p: gd.iter().map(|v| -v).collect(),
            hess: hd.iter().map(|v| -v).collect(),
        }
    }
}

fn check_overflow(params: &BarrierParams, points: &[Vec<f64>]) -> Result<()> {
    for x in points {
        let e = (params.kappa * params.phi.value(x)).exp();
        if !(e <= OVERFLOW_GUARD) {
            return Err(Error::BarrierOverflow { value: e });
        }
    }
    Ok(())
}

/// `max_j sup |f_j(t, x, g_j(x))|` over sampled boundary points and times.
fn boundary_data_sup(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> f64 {
    let mut sup: f64 = 0.0;
    for x in grid.boundary_sample_points() {
        for t in grid.sample_times() {
            for (j, f) in spec.boundary.f.iter().enumerate() {
                sup = sup.max(f.eval_r(t, &x, spec.initial.eval(j, &x)).abs());
            }
        }
    }
    sup
}

/// Worst initial margin `min(V_j(0,x) - g_j(x), g_j(x) - U_j(0,x))`.
fn initial_margin(params: &BarrierParams, spec: &ProblemSpec, points: &[Vec<f64>]) -> f64 {
    let mut worst = f64::INFINITY;
    for x in points {
        for j in 0..spec.modes() {
            let g = spec.initial.eval(j, x);
            worst = worst
                .min(eval_barrier_super(params, spec, j, 0.0, x) - g)
                .min(g - eval_barrier_sub(params, spec, j, 0.0, x));
        }
    }
    worst
}

/// Worst `2 <n, x - xa> + 2 kappa |x - xa|^2 <n, D phi> / 2` over boundary samples;
/// nonnegative means the exponential term has outward slope of the right sign.
fn boundary_slope_margin(params: &BarrierParams, domain: &Domain, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for x in points {
        let n = domain.normal(x)?;
        let dphi = params.phi.gradient(x);
        let nd: f64 = n.iter().zip(x).zip(&params.anchor).map(|((a, p), q)| a * (p - q)).sum();
        let np: f64 = n.iter().zip(&dphi).map(|(a, b)| a * b).sum();
        worst = worst.min(2.0 * nd + params.kappa * sq_dist(x, &params.anchor) * np);
    }
    Ok(worst)
}

/// `sup |F_j|` along both barriers with `C = 0`, using analytic derivatives
/// on sampled points and discrete probes on grid nodes.
fn operator_sup(params: &BarrierParams, spec: &ProblemSpec, grid: &Arc<SpaceTimeGrid>) -> Result<f64> {
    let base = params.with_c(0.0);
    let mut sup: f64 = 0.0;
    let points = grid.sample_points();
    for t in grid.sample_times() {
        for x in &points {
            for j in 0..spec.modes() {
                for upper in [false, true] {
                    let jet = barrier_jet(&base, spec, upper, j, t, x);
                    let f = spec.operator.mode(j).eval(t, x, jet.value, &jet.p, &jet.hess);
                    sup = sup.max(f.abs());
                }
            }
        }
    }
    let (u, v) = sample_barriers(&base, spec, grid)?;
    for tab in [&u, &v] {
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for j in 0..spec.modes() {
                let slice = tab.slice(j, level);
                for k in 0..grid.len() {
                    let (p, hess) = spatial_derivatives(grid, slice, k);
                    let x = &grid.node(k).x;
                    let f = spec.operator.mode(j).eval(t, x, slice[k], &p, &hess);
                    sup = sup.max(f.abs());
                }
            }
        }
    }
    if !sup.is_finite() {
        return Err(Error::ConstantSelection(format!("sup |F| along the barriers is {sup}")));
    }
    Ok(sup)
}

/// Chooses `A~, A, B, kappa, C` for the anchor `(xa, i)` and `eps > 0`, then
/// re-verifies every condition on the samples of `grid`.
pub fn select_constants(
    spec: &ProblemSpec,
    phi: &PhiFunction,
    grid: &Arc<SpaceTimeGrid>,
    anchor: &[f64],
    anchor_mode: usize,
    eps: f64,
) -> Result<BarrierParams> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::ConstantSelection(format!("eps must be > 0, got {eps}")));
    }
    if anchor_mode >= spec.modes() {
        return Err(Error::ModeIndex {
            index: anchor_mode,
            modes: spec.modes(),
        });
    }
    if !spec.domain.contains(anchor) {
        return Err(Error::ConstantSelection(format!("anchor {anchor:?} outside the domain")));
    }
    let points = grid.sample_points();
    let bpoints = grid.boundary_sample_points();
    let bounds = spec.costs.bounds(grid);

    let f_sup = boundary_data_sup(spec, grid);
    let a_tilde = A_TILDE_FLOOR.max(SAMPLED_SAFETY * f_sup);
    let a = SAMPLED_SAFETY * (a_tilde + bounds.gradient);
    let mut params = BarrierParams {
        anchor: anchor.to_vec(),
        anchor_mode,
        a_tilde,
        a,
        b: 0.0,
        c: 0.0,
        kappa: 0.0,
        eps,
        phi: phi.clone(),
    };

    // B with kappa = 0: doubling, then bisection on the initial margin.
    let ok = |b: f64| {
        let p = BarrierParams { b, ..params.clone() };
        initial_margin(&p, spec, &points) >= 0.0
    };
    let b_min = if ok(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !ok(hi) {
            hi *= 2.0;
            if hi > B_LIMIT {
                return Err(Error::ConstantSelection(format!(
                    "no B below {B_LIMIT:e} lifts the barriers over the initial data"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-9 * hi {
                break;
            }
        }
        hi
    };
    params.b = (SAMPLED_SAFETY * b_min).max(1e-6);

    params.kappa = (2.0 / phi.radius()) * (1.0 + KAPPA_SAFETY);
    check_overflow(&params, &points)?;

    let f_sup = operator_sup(&params, spec, grid)?;
    params.c = (SAMPLED_SAFETY * (f_sup + bounds.time_derivative)).max(1e-6);

    recheck(&params, spec, grid, &points, &bpoints)?;
    Ok(params)
}

fn recheck(
    params: &BarrierParams,
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    points: &[Vec<f64>],
    bpoints: &[Vec<f64>],
) -> Result<()> {
    let fail = |what: &str, v: f64| Err(Error::ConstantSelection(format!("{what} violated (worst {v:e})")));
    let m = initial_margin(params, spec, points);
    if m < -RECHECK_TOL {
        return fail("initial ordering U <= g <= V", m);
    }
    let m = boundary_slope_margin(params, &spec.domain, bpoints)?;
    if m < -RECHECK_TOL {
        return fail("interior ball slope inequality", m);
    }
    for t in grid.sample_times() {
        for x in points {
            for j in 0..spec.modes() {
                for upper in [false, true] {
                    let jet = barrier_jet(params, spec, upper, j, t, x);
                    let e = jet.a + spec.operator.mode(j).eval(t, x, jet.value, &jet.p, &jet.hess);
                    let scale = RECHECK_TOL * (1.0 + params.c);
                    if upper && e < -scale {
                        return fail("supersolution inequality for V", e);
                    }
                    if !upper && e > scale {
                        return fail("subsolution inequality for U", -e);
                    }
                }
            }
        }
        for x in bpoints {
            let n = spec.domain.normal(x)?;
            for j in 0..spec.modes() {
                for upper in [false, true] {
                    let jet = barrier_jet(params, spec, upper, j, t, x);
                    let np: f64 = n.iter().zip(&jet.p).map(|(a, b)| a * b).sum();
                    let b = np + spec.boundary.f[j].eval_r(t, x, jet.value);
                    if upper && b < -RECHECK_TOL {
                        return fail("Neumann inequality for V", b);
                    }
                    if !upper && b > RECHECK_TOL {
                        return fail("Neumann inequality for U", -b);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Tabulates `(U, V)` on every level and node.
pub fn sample_barriers(
    params: &BarrierParams,
    spec: &ProblemSpec,
    grid: &Arc<SpaceTimeGrid>,
) -> Result<(GridFunction, GridFunction)> {
    let pts: Vec<Vec<f64>> = grid.nodes().iter().map(|n| n.x.clone()).collect();
    check_overflow(params, &pts)?;
    let m = spec.modes();
    let shape = (m, grid.levels(), grid.len());
    let u = Array3::from_shape_fn(shape, |(j, n, k)| {
        eval_barrier_sub(params, spec, j, grid.time(n), &grid.node(k).x)
    });
    let v = Array3::from_shape_fn(shape, |(j, n, k)| {
        eval_barrier_super(params, spec, j, grid.time(n), &grid.node(k).x)
    });
    Ok((GridFunction::new(grid.clone(), u)?, GridFunction::new(grid.clone(), v)?))
}

/// CSV with columns `t, x1[, x2], mode, U, V`; modes are labelled from 1.
pub fn write_barrier_csv(out: &mut impl Write, u: &GridFunction, v: &GridFunction) -> Result<()> {
    let grid = u.grid();
    let n = grid.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("x{k}")));
    header.extend(["mode".into(), "U".into(), "V".into()]);
    writeln!(out, "{}", header.join(","))?;
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for k in 0..grid.len() {
            let x = &grid.node(k).x;
            for j in 0..u.modes() {
                let xs: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
                writeln!(
                    out,
                    "{t:.17e},{},{},{:.17e},{:.17e}",
                    xs.join(","),
                    j + 1,
                    u.get(j, level, k),
                    v.get(j, level, k)
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::problem::{BoundaryData, HjbOperator, InitialData, OperatorSpec, SwitchingCosts};

    fn constant_spec() -> ProblemSpec {
        ProblemSpec::new(
            Domain::interval(0.0, 1.0).unwrap(),
            0.5,
            OperatorSpec::hjb(vec![HjbOperator::heat_like(1.0, 1.0, Field::constant(0.0)); 2]),
            SwitchingCosts::uniform(2, 0.5),
            BoundaryData::homogeneous(2),
            InitialData::new(vec![Field::constant(1.0), Field::constant(0.8)]),
        )
        .unwrap()
    }

    #[test]
    fn phi_on_interval_and_disk() {
        let phi = build_phi(&Domain::interval(0.0, 1.0).unwrap()).unwrap();
        assert!((phi.value(&[0.5])).abs() < 1e-15);
        assert!((phi.value(&[0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(phi.gradient(&[1.0]), vec![2.0]);
        assert_eq!(phi.gradient(&[0.0]), vec![-2.0]);
        assert_eq!(phi.slope, 2.0);
        let disk = build_phi(&Domain::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        assert!((disk.slope - 2.0).abs() < 1e-12);
        assert_eq!(disk.value(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn anchor_identities() {
        let spec = constant_spec();
        let phi = build_phi(&spec.domain).unwrap();
        let p = BarrierParams::new_unchecked(phi, vec![0.3], 0, 2.0, 3.0, 4.0, 5.0, 0.25).unwrap();
        assert_eq!(eval_barrier_sub(&p, &spec, 0, 0.0, &[0.3]), 1.0 - 0.25);
        assert_eq!(eval_barrier_super(&p, &spec, 0, 0.0, &[0.3]), 1.0 + 0.25);
        assert_eq!(eval_barrier_super(&p, &spec, 1, 0.0, &[0.3]), 1.0 + 0.25 + 0.5);
        let flat = BarrierParams::new_unchecked(p.phi.clone(), vec![0.3], 0, 0.0, 0.0, 0.0, 5.0, 0.25).unwrap();
        for x in [0.0, 0.4, 1.0] {
            assert_eq!(eval_barrier_sub(&flat, &spec, 1, 0.3, &[x]), 0.8 - 0.25);
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let spec = ProblemSpec::new(
            Domain::ball(vec![0.0, 0.0], 1.0).unwrap(),
            1.0,
            OperatorSpec::hjb(vec![
                HjbOperator::diagonal(
                    vec![Field::constant(1.0); 2],
                    vec![Field::constant(0.0); 2],
                    1.0,
                    Field::constant(0.0)
                );
                2
            ]),
            SwitchingCosts::new(
                2,
                vec![
                    Field::constant(0.0),
                    Field::parse("1 + 0.1*x1*x2 + 0.05*t", 2, false).unwrap(),
                    Field::constant(1.0),
                    Field::constant(0.0),
                ],
            )
            .unwrap(),
            BoundaryData::homogeneous(2),
            InitialData::new(vec![Field::constant(0.0); 2]),
        )
        .unwrap();
        let phi = build_phi(&spec.domain).unwrap();
        let p = BarrierParams::new_unchecked(phi, vec![0.2, -0.1], 0, 1.3, 0.7, 2.0, 2.2, 0.1).unwrap();
        let x = [0.4, 0.3];
        let e = 1e-4;
        for upper in [false, true] {
            let f = |t: f64, y: &[f64]| {
                if upper {
                    eval_barrier_super(&p, &spec, 1, t, y)
                } else {
                    eval_barrier_sub(&p, &spec, 1, t, y)
                }
            };
            let jet = barrier_jet(&p, &spec, upper, 1, 0.5, &x);
            assert!((jet.a - (f(0.5 + e, &x) - f(0.5 - e, &x)) / (2.0 * e)).abs() < 1e-6);
            for k in 0..2 {
                let mut yp = x;
                let mut ym = x;
                yp[k] += e;
                ym[k] -= e;
                let g = (f(0.5, &yp) - f(0.5, &ym)) / (2.0 * e);
                assert!((jet.p[k] - g).abs() < 1e-6, "grad {k}");
                let h = (f(0.5, &yp) - 2.0 * f(0.5, &x) + f(0.5, &ym)) / (e * e);
                assert!((jet.hess[k * 2 + k] - h).abs() < 1e-4, "hess {k}");
            }
            let mut pp = x;
            pp[0] += e;
            pp[1] += e;
            let mut pm = x;
            pm[0] += e;
            pm[1] -= e;
            let mut mp = x;
            mp[0] -= e;
            mp[1] += e;
            let mut mm = x;
            mm[0] -= e;
            mm[1] -= e;
            let cross = (f(0.5, &pp) - f(0.5, &pm) - f(0.5, &mp) + f(0.5, &mm)) / (4.0 * e * e);
            assert!((jet.hess[1] - cross).abs() < 1e-4);
        }
    }

    #[test]
    fn selection_on_constant_data() {
        let spec = constant_spec();
        let grid = Arc::new(SpaceTimeGrid::new(&spec.domain, spec.horizon, 0.05, 0.05).unwrap());
        let phi = build_phi(&spec.domain).unwrap();
        let p = select_constants(&spec, &phi, &grid, &[0.5], 0, 0.1).unwrap();
        assert_eq!(p.a_tilde, 1.0);
        assert!((p.a - 1.1).abs() < 1e-12);
        assert!(p.kappa >= 4.0 * 1.1 - 1e-12);
        let (u, v) = sample_barriers(&p, &spec, &grid).unwrap();
        for (a, b) in u.values().iter().zip(v.values().iter()) {
            assert!(a <= b);
        }
    }

    #[test]
    fn eps_shifts_tables_monotonically() {
        let spec = constant_spec();
        let grid = Arc::new(SpaceTimeGrid::new(&spec.domain, spec.horizon, 0.1, 0.1).unwrap());
        let phi = build_phi(&spec.domain).unwrap();
        let p = select_constants(&spec, &phi, &grid, &[0.0], 1, 0.2).unwrap();
        let q = BarrierParams { eps: 0.4, ..p.clone() };
        let (u1, v1) = sample_barriers(&p, &spec, &grid).unwrap();
        let (u2, v2) = sample_barriers(&q, &spec, &grid).unwrap();
        assert!(u2.values().iter().zip(u1.values().iter()).all(|(a, b)| a < b));
        assert!(v2.values().iter().zip(v1.values().iter()).all(|(a, b)| a > b));
        assert!((u1.get(1, 0, 0) - (0.8 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let spec = constant_spec();
        let grid = Arc::new(SpaceTimeGrid::new(&spec.domain, spec.horizon, 0.1, 0.1).unwrap());
        let phi = build_phi(&spec.domain).unwrap();
        let p = BarrierParams::new_unchecked(phi, vec![0.5], 0, 1.0, 1.0, 1.0, 1e4, 0.1).unwrap();
        assert!(matches!(sample_barriers(&p, &spec, &grid), Err(Error::BarrierOverflow { .. })));
    }
}
