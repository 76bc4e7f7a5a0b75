//! Space-time grids on supported domains and grid functions living on them.
//!
//! Intervals use uniform nodes with the two end points as boundary nodes.
//! Two-dimensional balls use the lattice points lying at least `h/2` inside
//! the circle as interior nodes; the intersections of lattice lines with the
//! circle are the boundary nodes (Shortley-Weller arms). A boundary node closes
//! the Neumann condition against the bilinear interpolant at `x - 2h n`.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array3, ArrayView1, ArrayView2};

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Number of nearby nodes used for least-squares derivative fits in 2D.
const FIT_NEIGHBORS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// One-sided stencil closing the Neumann condition at a boundary node:
/// `(u_b - sum_l w_l u_l) / distance` approximates the outward normal derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub weights: Vec<(usize, f64)>,
    pub distance: f64,
}

/// How the mixed second derivative is probed at an interior node.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossStencil {
    /// One-dimensional grids have no mixed derivative.
    None,
    /// Lattice diagonals `(-,-), (-,+), (+,-), (+,+)`.
    Diagonals([usize; 4]),
    /// Least-squares quadratic fit over nearby nodes.
    Fit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Interior {
        /// `(minus, plus)` neighbour along each coordinate axis.
        axes: Vec<(Neighbor, Neighbor)>,
        cross: CrossStencil,
    },
    Boundary {
        normal: Vec<f64>,
        closure: Closure,
        /// Nodes on the interior side used for one-sided derivative probes.
        fit: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub x: Vec<f64>,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, NodeKind::Boundary { .. })
    }

    pub fn normal(&self) -> Option<&[f64]> {
        match &self.kind {
            NodeKind::Boundary { normal, .. } => Some(normal),
            NodeKind::Interior { .. } => None,
        }
    }
}

/// Discretization of `[0, T] x closure(domain)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    domain: Domain,
    nodes: Vec<Node>,
    h: f64,
    dt: f64,
    steps: usize,
    horizon: f64,
}

impl SpaceTimeGrid {
    /// Builds a grid with spacing close to `h` and `ceil(T / dt)` equal steps.
    pub fn new(domain: &Domain, horizon: f64, h: f64, dt: f64) -> Result<Self> {
        for (name, v) in [("horizon", horizon), ("h", h), ("dt", dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Grid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        let dt = horizon / steps as f64;
        let (nodes, h) = match domain {
            Domain::Interval { lower, upper } => interval_nodes(*lower, *upper, h)?,
            Domain::Ball { center, radius } if center.len() == 1 => {
                interval_nodes(center[0] - radius, center[0] + radius, h)?
            }
            Domain::Ball { center, radius } if center.len() == 2 => {
                (disk_nodes(domain, center, *radius, h)?, h)
            }
            Domain::Ball { center, .. } => {
                return Err(Error::Grid(format!(
                    "grids are available for dimension 1 and 2 only, got {}",
                    center.len()
                )))
            }
        };
        Ok(Self {
            domain: domain.clone(),
            nodes,
            h,
            dt,
            steps,
            horizon,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &Node {
        &self.nodes[k]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps; there are `steps + 1` levels.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            self.horizon
        } else {
            level as f64 * self.dt
        }
    }

    pub fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&k| self.nodes[k].is_boundary())
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&k| !self.nodes[k].is_boundary())
    }

    /// Same domain and horizon with spacing and step divided by `factor`.
    pub fn refined(&self, factor: f64) -> Result<Self> {
        Self::new(&self.domain, self.horizon, self.h / factor, self.dt / factor)
    }

    /// Nodes plus midpoints of every stencil arm, each listed once.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.nodes.iter().map(|n| n.x.clone()).collect();
        for (k, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Interior { axes, .. } = &node.kind {
                for (minus, plus) in axes {
                    for nb in [minus, plus] {
                        let other = &self.nodes[nb.index];
                        if nb.index > k || other.is_boundary() {
                            out.push(node.x.iter().zip(&other.x).map(|(a, b)| 0.5 * (a + b)).collect());
                        }
                    }
                }
            }
        }
        out
    }

    /// Boundary nodes plus midpoints between neighbouring boundary nodes.
    pub fn boundary_sample_points(&self) -> Vec<Vec<f64>> {
        let bnd: Vec<&Node> = self.nodes.iter().filter(|n| n.is_boundary()).collect();
        let mut out: Vec<Vec<f64>> = bnd.iter().map(|n| n.x.clone()).collect();
        if self.dim() == 2 {
            let c = self.domain.center();
            let r = self.domain.ball_radius();
            let mut angles: Vec<f64> = bnd
                .iter()
                .map(|n| (n.x[1] - c[1]).atan2(n.x[0] - c[0]))
                .collect();
            angles.sort_by(|a, b| a.total_cmp(b));
            for w in 0..angles.len() {
                let a = angles[w];
                let b = if w + 1 < angles.len() {
                    angles[w + 1]
                } else {
                    angles[0] + 2.0 * std::f64::consts::PI
                };
                let m = 0.5 * (a + b);
                out.push(vec![c[0] + r * m.cos(), c[1] + r * m.sin()]);
            }
        }
        out
    }

    /// Time levels plus midpoints between consecutive levels.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.steps + 1);
        for n in 0..=self.steps {
            out.push(self.time(n));
            if n < self.steps {
                out.push(0.5 * (self.time(n) + self.time(n + 1)));
            }
        }
        out
    }

    /// Index of the node at coordinates `x`, if any.
    pub fn find_node(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.nodes.iter().position(|n| {
            n.x.len() == x.len() && n.x.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol)
        })
    }
}

fn interval_nodes(lower: f64, upper: f64, h: f64) -> Result<(Vec<Node>, f64)> {
    let cells = ((upper - lower) / h).round().max(2.0) as usize;
    let h = (upper - lower) / cells as f64;
    let coord = |k: usize| {
        if k == cells {
            upper
        } else {
            lower + k as f64 * h
        }
    };
    let mut nodes = Vec::with_capacity(cells + 1);
    for k in 0..=cells {
        let kind = if k == 0 || k == cells {
            let (normal, inward, second) = if k == 0 {
                (-1.0, 1, 2)
            } else {
                (1.0, cells - 1, cells - 2)
            };
            NodeKind::Boundary {
                normal: vec![normal],
                closure: Closure {
                    weights: vec![(inward, 1.0)],
                    distance: h,
                },
                fit: vec![inward, second],
            }
        } else {
            NodeKind::Interior {
                axes: vec![(
                    Neighbor {
                        index: k - 1,
                        distance: h,
                    },
                    Neighbor {
                        index: k + 1,
                        distance: h,
                    },
                )],
                cross: CrossStencil::None,
            }
        };
        nodes.push(Node {
            x: vec![coord(k)],
            kind,
        });
    }
    Ok((nodes, h))
}

fn disk_nodes(domain: &Domain, center: &[f64], radius: f64, h: f64) -> Result<Vec<Node>> {
    if radius / h < 4.0 {
        return Err(Error::Grid(format!(
            "disk grids need radius / h >= 4, got {}",
            radius / h
        )));
    }
    let cap = (radius / h).ceil() as i64 + 1;
    let point = |i: i64, j: i64| [center[0] + i as f64 * h, center[1] + j as f64 * h];
    let dist = |p: [f64; 2]| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();

    let mut lattice: HashMap<(i64, i64), usize> = HashMap::new();
    let mut ids: Vec<(i64, i64)> = Vec::new();
    for j in -cap..=cap {
        for i in -cap..=cap {
            if dist(point(i, j)) < radius - 0.5 * h {
                lattice.insert((i, j), ids.len());
                ids.push((i, j));
            }
        }
    }
    let n_int = ids.len();
    let mut boundary: Vec<[f64; 2]> = Vec::new();
    let mut boundary_key: HashMap<(usize, i64, i64), usize> = HashMap::new();
    let mut interior_kinds = Vec::with_capacity(n_int);

    for &(i, j) in &ids {
        let p = point(i, j);
        let mut axes = Vec::with_capacity(2);
        for axis in 0..2 {
            let mut pair = [Neighbor {
                index: 0,
                distance: 0.0,
            }; 2];
            for (slot, dir) in [-1i64, 1].into_iter().enumerate() {
                let (ni, nj) = if axis == 0 { (i + dir, j) } else { (i, j + dir) };
                pair[slot] = if let Some(&k) = lattice.get(&(ni, nj)) {
                    Neighbor { index: k, distance: h }
                } else {
                    let d = [p[0] - center[0], p[1] - center[1]];
                    let b = d[axis] * dir as f64;
                    let c = d[0] * d[0] + d[1] * d[1] - radius * radius;
                    let s = -b + (b * b - c).sqrt();
                    let mut q = p;
                    q[axis] += dir as f64 * s;
                    let other = if axis == 0 { j } else { i };
                    let idx = *boundary_key.entry((axis, dir, other)).or_insert_with(|| {
                        // project onto the circle exactly
                        let len = dist(q);
                        let q = [
                            center[0] + radius * (q[0] - center[0]) / len,
                            center[1] + radius * (q[1] - center[1]) / len,
                        ];
                        boundary.push(q);
                        n_int + boundary.len() - 1
                    });
                    Neighbor {
                        index: idx,
                        distance: s,
                    }
                };
            }
            axes.push((pair[0], pair[1]));
        }
        let diag = [(-1, -1), (-1, 1), (1, -1), (1, 1)]
            .map(|(di, dj)| lattice.get(&(i + di, j + dj)).copied());
        let cross = if diag.iter().all(Option::is_some) {
            CrossStencil::Diagonals(diag.map(Option::unwrap))
        } else {
            // filled in once all node positions are known
            CrossStencil::Fit(Vec::new())
        };
        interior_kinds.push(NodeKind::Interior { axes, cross });
    }

    let mut nodes: Vec<Node> = ids
        .iter()
        .zip(interior_kinds)
        .map(|(&(i, j), kind)| Node {
            x: point(i, j).to_vec(),
            kind,
        })
        .collect();

    let all_points: Vec<[f64; 2]> = ids
        .iter()
        .map(|&(i, j)| point(i, j))
        .chain(boundary.iter().copied())
        .collect();
    let nearest = |me: usize| -> Vec<usize> {
        let q = all_points[me];
        let mut by_dist: Vec<(f64, usize)> = all_points
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != me)
            .map(|(k, p)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2), k))
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_dist.iter().take(FIT_NEIGHBORS).map(|&(_, k)| k).collect()
    };
    for (k, node) in nodes.iter_mut().enumerate() {
        if let NodeKind::Interior {
            cross: CrossStencil::Fit(fit),
            ..
        } = &mut node.kind
        {
            *fit = nearest(k);
        }
    }
    for (b, &q) in boundary.iter().enumerate() {
        let normal = domain.normal(&q)?;
        let inner = [q[0] - 2.0 * h * normal[0], q[1] - 2.0 * h * normal[1]];
        let fx = (inner[0] - center[0]) / h;
        let fy = (inner[1] - center[1]) / h;
        let (i0, j0) = (fx.floor() as i64, fy.floor() as i64);
        let (ax, ay) = (fx - i0 as f64, fy - j0 as f64);
        let mut weights = Vec::with_capacity(4);
        for (di, dj, w) in [
            (0, 0, (1.0 - ax) * (1.0 - ay)),
            (1, 0, ax * (1.0 - ay)),
            (0, 1, (1.0 - ax) * ay),
            (1, 1, ax * ay),
        ] {
            let k = lattice.get(&(i0 + di, j0 + dj)).ok_or_else(|| {
                Error::Grid(format!("closure stencil for boundary point {q:?} leaves the interior"))
            })?;
            weights.push((*k, w));
        }
        let fit = nearest(n_int + b);
        nodes.push(Node {
            x: q.to_vec(),
            kind: NodeKind::Boundary {
                normal,
                closure: Closure {
                    weights,
                    distance: 2.0 * h,
                },
                fit,
            },
        });
    }
    Ok(nodes)
}

/// Values of an `m`-component function on every level and node of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<SpaceTimeGrid>,
    values: Array3<f64>,
}

impl GridFunction {
    /// Wraps a `(modes, levels, nodes)` array, rejecting bad shapes and non-finite values.
    pub fn new(grid: Arc<SpaceTimeGrid>, values: Array3<f64>) -> Result<Self> {
        let (m, l, n) = values.dim();
        if m == 0 || l != grid.levels() || n != grid.len() {
            return Err(Error::GridMismatch(format!(
                "values have shape ({m}, {l}, {n}), grid expects (m, {}, {})",
                grid.levels(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid function value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpaceTimeGrid>, modes: usize) -> Self {
        let values = Array3::zeros((modes, grid.levels(), grid.len()));
        Self { grid, values }
    }

    /// Tabulates `f(mode, t, x)`.
    pub fn from_fn(
        grid: Arc<SpaceTimeGrid>,
        modes: usize,
        f: impl Fn(usize, f64, &[f64]) -> f64,
    ) -> Result<Self> {
        let values = Array3::from_shape_fn((modes, grid.levels(), grid.len()), |(i, n, k)| {
            f(i, grid.time(n), &grid.node(k).x)
        });
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.values.dim().0
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    #[inline]
    pub fn get(&self, mode: usize, level: usize, node: usize) -> f64 {
        self.values[[mode, level, node]]
    }

    /// All modes at one level, shape `(modes, nodes)`.
    pub fn level(&self, level: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(ndarray::Axis(1), level)
    }

    /// One mode at one level.
    pub fn slice(&self, mode: usize, level: usize) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![mode, level, ..])
    }

    /// Component vector `(u_1, ..., u_m)` at a node.
    pub fn node_values(&self, level: usize, node: usize) -> Vec<f64> {
        self.values.slice(ndarray::s![.., level, node]).to_vec()
    }

    /// Applies `f(t, value)` to every entry.
    pub fn map_with_time(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = self.values.clone();
        for ((_, n, _), v) in values.indexed_iter_mut() {
            *v = f(self.grid.time(n), *v);
        }
        Self::new(self.grid.clone(), values)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::GridMismatch("shapes differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_grid_shape_and_normals() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = SpaceTimeGrid::new(&d, 0.3, 0.1, 0.07).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.steps(), 5);
        assert!((g.steps() as f64 * g.dt() - g.horizon()).abs() < 1e-12);
        assert_eq!(g.time(g.steps()), 0.3);
        let b: Vec<usize> = g.boundary_indices().collect();
        assert_eq!(b, vec![0, 10]);
        for k in b {
            let n = g.node(k).normal().unwrap();
            assert_eq!(n, d.normal(&g.node(k).x).unwrap().as_slice());
        }
        assert_eq!(g.sample_points().len(), 21);
        assert_eq!(g.sample_times().len(), 11);
    }

    #[test]
    fn disk_grid_invariants() {
        let d = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = SpaceTimeGrid::new(&d, 0.1, 0.1, 0.05).unwrap();
        let mut nb = 0;
        for node in g.nodes() {
            assert!(d.contains(&node.x));
            match &node.kind {
                NodeKind::Boundary { normal, closure, fit } => {
                    nb += 1;
                    let exact = d.normal(&node.x).unwrap();
                    assert!(normal.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-12));
                    let wsum: f64 = closure.weights.iter().map(|w| w.1).sum();
                    assert!((wsum - 1.0).abs() < 1e-12);
                    assert!(closure.weights.iter().all(|w| w.1 >= 0.0 && !g.node(w.0).is_boundary()));
                    assert_eq!(fit.len(), FIT_NEIGHBORS);
                }
                NodeKind::Interior { axes, .. } => {
                    for (m, p) in axes {
                        assert!(m.distance > 0.05 - 1e-12 && p.distance > 0.05 - 1e-12);
                    }
                }
            }
        }
        assert!(nb > 20);
    }

    #[test]
    fn disk_grid_requires_resolution() {
        let d = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(SpaceTimeGrid::new(&d, 0.1, 0.5, 0.05).is_err());
        let d3 = Domain::ball(vec![0.0; 3], 1.0).unwrap();
        assert!(SpaceTimeGrid::new(&d3, 0.1, 0.1, 0.05).is_err());
    }

    #[test]
    fn grid_function_rejects_non_finite() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(&d, 0.1, 0.25, 0.1).unwrap());
        let mut v = Array3::zeros((2, g.levels(), g.len()));
        assert!(GridFunction::new(g.clone(), v.clone()).is_ok());
        v[[1, 0, 2]] = f64::NAN;
        assert!(GridFunction::new(g.clone(), v).is_err());
        assert!(GridFunction::new(g, Array3::zeros((2, 1, 1))).is_err());
    }
}
