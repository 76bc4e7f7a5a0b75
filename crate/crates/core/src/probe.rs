//! Finite-difference stand-ins for the derivative triple `(a, p, X)`.
//!
//! Interior nodes use (possibly non-uniform) central differences; boundary
//! nodes use one-sided differences toward the interior. Time derivatives are
//! backward differences, so probes exist only from level 1 on.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::grid::{CrossStencil, GridFunction, NodeKind, SpaceTimeGrid};

/// Surrogate for a parabolic jet element: time derivative `a`, gradient `p`
/// and Hessian `X` (row-major, `n x n`, symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeProbe {
    pub a: f64,
    pub p: Vec<f64>,
    pub hess: Vec<f64>,
}

impl DerivativeProbe {
    pub fn new(a: f64, p: Vec<f64>, hess: Vec<f64>) -> Result<Self> {
        let n = p.len();
        if hess.len() != n * n {
            return Err(Error::Problem(format!(
                "Hessian has {} entries, expected {}",
                hess.len(),
                n * n
            )));
        }
        crate::error::ensure_finite("derivative probe", &[a])?;
        crate::error::ensure_finite("derivative probe", &p)?;
        crate::error::ensure_finite("derivative probe", &hess)?;
        for k in 0..n {
            for l in 0..k {
                if (hess[k * n + l] - hess[l * n + k]).abs() > 1e-12 {
                    return Err(Error::Problem("Hessian surrogate is not symmetric".into()));
                }
            }
        }
        Ok(Self { a, p, hess })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// Spatial derivatives `(p, X)` of one level slice at `node`.
pub fn spatial_derivatives(
    grid: &SpaceTimeGrid,
    u: ArrayView1<'_, f64>,
    node: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.dim();
    let me = grid.node(node);
    let u0 = u[node];
    match &me.kind {
        NodeKind::Interior { axes, cross } => {
            let mut p = vec![0.0; n];
            let mut hess = vec![0.0; n * n];
            for (k, (minus, plus)) in axes.iter().enumerate() {
                let (hm, hp) = (minus.distance, plus.distance);
                let (um, up) = (u[minus.index], u[plus.index]);
                p[k] = (hm * hm * (up - u0) + hp * hp * (u0 - um)) / (hm * hp * (hm + hp));
                hess[k * n + k] = 2.0 * ((up - u0) / hp - (u0 - um) / hm) / (hp + hm);
            }
            match cross {
                CrossStencil::None => {}
                CrossStencil::Diagonals(d) => {
                    let h = grid.h();
                    let x01 = (u[d[3]] - u[d[2]] - u[d[1]] + u[d[0]]) / (4.0 * h * h);
                    hess[1] = x01;
                    hess[2] = x01;
                }
                CrossStencil::Fit(fit) => {
                    let (_, fitted) = quadratic_fit(grid, u, node, fit);
                    hess[1] = fitted[1];
                    hess[2] = fitted[1];
                }
            }
            (p, hess)
        }
        NodeKind::Boundary { normal, fit, .. } => {
            if n == 1 {
                let h = grid.h();
                let inward = -normal[0];
                let (u1, u2) = (u[fit[0]], u[fit[1]]);
                (vec![inward * (u1 - u0) / h], vec![(u0 - 2.0 * u1 + u2) / (h * h)])
            } else {
                quadratic_fit(grid, u, node, fit)
            }
        }
    }
}

/// Least-squares fit of `u(y) - u(x) = p.d + d^T X d / 2` over `fit` nodes.
fn quadratic_fit(
    grid: &SpaceTimeGrid,
    u: ArrayView1<'_, f64>,
    node: usize,
    fit: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let h = grid.h();
    let x = &grid.node(node).x;
    let rows = fit.len();
    let mut a = DMatrix::<f64>::zeros(rows, 5);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, &l) in fit.iter().enumerate() {
        let d0 = (grid.node(l).x[0] - x[0]) / h;
        let d1 = (grid.node(l).x[1] - x[1]) / h;
        a[(r, 0)] = d0;
        a[(r, 1)] = d1;
        a[(r, 2)] = 0.5 * d0 * d0;
        a[(r, 3)] = d0 * d1;
        a[(r, 4)] = 0.5 * d1 * d1;
        b[r] = u[l] - u[node];
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(5));
    let p = vec![coef[0] / h, coef[1] / h];
    let h2 = h * h;
    let hess = vec![coef[2] / h2, coef[3] / h2, coef[3] / h2, coef[4] / h2];
    (p, hess)
}

/// Outward normal derivative at a boundary node from its closure stencil.
pub fn closure_normal_derivative(grid: &SpaceTimeGrid, u: ArrayView1<'_, f64>, node: usize) -> Option<f64> {
    match &grid.node(node).kind {
        NodeKind::Boundary { closure, .. } => {
            let inner: f64 = closure.weights.iter().map(|&(l, w)| w * u[l]).sum();
            Some((u[node] - inner) / closure.distance)
        }
        NodeKind::Interior { .. } => None,
    }
}

/// Full probe of mode `mode` at `(level, node)` with a backward time difference.
pub fn discrete_probe(u: &GridFunction, mode: usize, level: usize, node: usize) -> Result<DerivativeProbe> {
    if level == 0 || level >= u.grid().levels() {
        return Err(Error::Problem(format!(
            "time probe needs 1 <= level < {}, got {level}",
            u.grid().levels()
        )));
    }
    let grid = u.grid();
    let a = (u.get(mode, level, node) - u.get(mode, level - 1, node)) / grid.dt();
    let (p, hess) = spatial_derivatives(grid, u.slice(mode, level), node);
    DerivativeProbe::new(a, p, hess)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::Domain;

    #[test]
    fn central_differences_exact_on_quadratics_1d() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(&d, 1.0, 0.1, 0.5).unwrap());
        let u = GridFunction::from_fn(g.clone(), 1, |_, t, x| 3.0 * t + x[0] * x[0] - 2.0 * x[0]).unwrap();
        let pr = discrete_probe(&u, 0, 1, 4).unwrap();
        assert!((pr.a - 3.0).abs() < 1e-12);
        assert!((pr.p[0] - (2.0 * 0.4 - 2.0)).abs() < 1e-12);
        assert!((pr.hess[0] - 2.0).abs() < 1e-10);
        // one-sided at the ends: second derivative exact, gradient first order
        let pb = discrete_probe(&u, 0, 1, 0).unwrap();
        assert!((pb.hess[0] - 2.0).abs() < 1e-10);
        assert!((pb.p[0] - (-2.0)).abs() < 0.11);
        assert!(discrete_probe(&u, 0, 0, 4).is_err());
    }

    #[test]
    fn closure_derivative_matches_normal_slope() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(&d, 1.0, 0.1, 0.5).unwrap());
        let u = GridFunction::from_fn(g.clone(), 1, |_, _, x| 5.0 * x[0]).unwrap();
        let left = closure_normal_derivative(&g, u.slice(0, 0), 0).unwrap();
        let right = closure_normal_derivative(&g, u.slice(0, 0), 10).unwrap();
        assert!((left + 5.0).abs() < 1e-12 && (right - 5.0).abs() < 1e-12);
        assert!(closure_normal_derivative(&g, u.slice(0, 0), 3).is_none());
    }

    #[test]
    fn disk_probes_exact_on_quadratics() {
        let d = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(&d, 1.0, 0.1, 0.5).unwrap());
        let q = |x: &[f64]| 1.0 + 0.5 * x[0] - x[1] + x[0] * x[0] + 0.3 * x[0] * x[1] - 2.0 * x[1] * x[1];
        let u = GridFunction::from_fn(g.clone(), 1, |_, _, x| q(x)).unwrap();
        for k in 0..g.len() {
            let x = &g.node(k).x;
            let (p, hs) = spatial_derivatives(&g, u.slice(0, 1), k);
            assert!((p[0] - (0.5 + 2.0 * x[0] + 0.3 * x[1])).abs() < 1e-8, "node {k}");
            assert!((p[1] - (-1.0 + 0.3 * x[0] - 4.0 * x[1])).abs() < 1e-8, "node {k}");
            assert!((hs[0] - 2.0).abs() < 1e-6 && (hs[3] + 4.0).abs() < 1e-6, "node {k}");
            assert!((hs[1] - 0.3).abs() < 1e-6 && hs[1] == hs[2], "node {k}");
        }
    }

    #[test]
    fn probe_rejects_asymmetric_hessian() {
        assert!(DerivativeProbe::new(0.0, vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(DerivativeProbe::new(0.0, vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(DerivativeProbe::new(f64::NAN, vec![0.0], vec![1.0]).is_err());
    }
}
