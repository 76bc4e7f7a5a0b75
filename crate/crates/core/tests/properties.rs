use std::sync::Arc;

use itertools::Itertools;
use ndarray::Array3;
use proptest::prelude::*;

use oswitch_core::assumptions::{check_no_loop, check_triangle, min_cycle, validate, ValidateOptions};
use oswitch_core::fixtures;
use oswitch_core::problem::{
    eval_boundary_operator, eval_obstacle, normalize_monotonicity, scale_solution, unscale_solution,
};
use oswitch_core::scheme::obstacle_project;
use oswitch_core::verify::{comparison_check, ComparisonMode};
use oswitch_core::{
    BoundaryData, Domain, Field, GridFunction, HjbOperator, InitialData, OperatorSpec, ProblemSpec,
    SpaceTimeGrid, SwitchingCosts,
};

fn matrix(m: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(lo..hi, m * m).prop_map(move |v| {
        (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { v[i * m + j] }).collect())
            .collect()
    })
}

fn sized_matrix(max_m: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_m).prop_flat_map(move |m| matrix(m, lo, hi))
}

fn node_case(max_m: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2..=max_m).prop_flat_map(|m| (matrix(m, 0.01, 1.0), prop::collection::vec(-3.0..3.0f64, m)))
}

fn tiny_grid() -> SpaceTimeGrid {
    SpaceTimeGrid::new(&Domain::interval(0.0, 1.0).unwrap(), 1.0, 0.5, 0.5).unwrap()
}

fn line_grid() -> Arc<SpaceTimeGrid> {
    Arc::new(SpaceTimeGrid::new(&Domain::interval(0.0, 1.0).unwrap(), 0.5, 0.1, 0.1).unwrap())
}

fn random_function(values: Vec<f64>) -> GridFunction {
    let grid = line_grid();
    let shape = (2, grid.levels(), grid.len());
    GridFunction::new(grid, Array3::from_shape_vec(shape, values).unwrap()).unwrap()
}

fn function_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 2 * 6 * 11)
}

fn simple_spec(f: Field) -> ProblemSpec {
    let op = HjbOperator::heat_like(0.5, 1.0, Field::tx(|t, x| 1.0 + t * x[0]));
    ProblemSpec::new(
        Domain::interval(0.0, 1.0).unwrap(),
        1.0,
        OperatorSpec::hjb(vec![op.clone(), op]),
        SwitchingCosts::uniform(2, 0.2),
        BoundaryData::new(vec![f.clone(), f]),
        InitialData::new(vec![Field::constant(0.0), Field::constant(0.1)]),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn obstacle_matches_brute_force(c in sized_matrix(6, -1.0, 1.0), seed in any::<u64>()) {
        let m = c.len();
        let u: Vec<f64> = (0..m).map(|k| ((seed >> (k * 7)) % 97) as f64 / 10.0 - 4.0).collect();
        let costs = SwitchingCosts::constant(&c).unwrap();
        for i in 0..m {
            let expected = (0..m).filter(|&j| j != i).map(|j| u[j] - c[i][j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(eval_obstacle(&u, &costs, i, 0.0, &[0.5]).unwrap(), expected);
        }
    }

    #[test]
    fn obstacle_is_monotone(
        (c, u) in node_case(5),
        bump in 0.0..1.0f64,
        pick in any::<prop::sample::Index>(),
    ) {
        let m = c.len();
        let costs = SwitchingCosts::constant(&c).unwrap();
        let i = 0;
        let j = 1 + pick.index(m - 1);
        let base = eval_obstacle(&u, &costs, i, 0.0, &[0.5]).unwrap();

        let mut raised = u.clone();
        raised[j] += bump;
        prop_assert!(eval_obstacle(&raised, &costs, i, 0.0, &[0.5]).unwrap() >= base);

        let mut dearer = c.clone();
        dearer[i][j] += bump;
        let dearer = SwitchingCosts::constant(&dearer).unwrap();
        prop_assert!(eval_obstacle(&u, &dearer, i, 0.0, &[0.5]).unwrap() <= base);
    }

    #[test]
    fn identical_components_with_zero_costs(m in 2usize..6, w in -10.0..10.0f64) {
        let costs = SwitchingCosts::uniform(m, 0.0);
        let u = vec![w; m];
        for i in 0..m {
            prop_assert_eq!(eval_obstacle(&u, &costs, i, 0.3, &[0.1]).unwrap(), w);
        }
    }

    #[test]
    fn boundary_operator_monotone_in_r(r in -5.0..5.0f64, dr in 0.0..5.0f64, p in -3.0..3.0f64, t in 0.0..1.0f64) {
        let spec = simple_spec(Field::txr(|t, _, r| r.powi(3) + t * r + r.atan()));
        for x in [[0.0], [1.0]] {
            let lo = eval_boundary_operator(&spec, 0, t, &x, r, &[p]).unwrap();
            let hi = eval_boundary_operator(&spec, 0, t, &x, r + dr, &[p]).unwrap();
            prop_assert!(hi >= lo);
        }
    }

    #[test]
    fn zero_rescaling_is_identity(t in 0.0..1.0f64, x in 0.0..1.0f64, r in -3.0..3.0f64, p in -3.0..3.0f64, q in -3.0..3.0f64) {
        let spec = simple_spec(Field::txr(|_, x, r| r + x[0]));
        let same = normalize_monotonicity(&spec, 0.0).unwrap();
        for i in 0..2 {
            let a = spec.operator.mode(i).eval(t, &[x], r, &[p], &[q]);
            let b = same.operator.mode(i).eval(t, &[x], r, &[p], &[q]);
            prop_assert!((a - b).abs() <= 1e-14);
            let fa = spec.boundary.f[i].eval_r(t, &[x], r);
            let fb = same.boundary.f[i].eval_r(t, &[x], r);
            prop_assert!((fa - fb).abs() <= 1e-14);
            let ca = spec.costs.cost(i, 1 - i, t, &[x]);
            let cb = same.costs.cost(i, 1 - i, t, &[x]);
            prop_assert!((ca - cb).abs() <= 1e-14);
        }
    }

    #[test]
    fn scale_round_trip(values in function_values(), lb in -2.0..2.0f64) {
        let u = random_function(values);
        let back = unscale_solution(&scale_solution(&u, lb).unwrap(), lb).unwrap();
        prop_assert!(back.max_abs_diff(&u).unwrap() <= 1e-12);
    }

    #[test]
    fn min_cycle_matches_enumeration(c in sized_matrix(6, -1.0, 1.0)) {
        let m = c.len();
        let flat: Vec<f64> = c.iter().flatten().copied().collect();
        let mut best = f64::INFINITY;
        for len in 2..=m {
            for seq in (0..m).permutations(len) {
                let w: f64 = (0..len).map(|k| c[seq[k]][seq[(k + 1) % len]]).sum();
                best = best.min(w);
            }
        }
        let (w, cycle) = min_cycle(&flat, m);
        let recomputed: f64 = (0..cycle.len()).map(|k| c[cycle[k]][cycle[(k + 1) % cycle.len()]]).sum();
        prop_assert!((w - best).abs() <= 1e-12);
        prop_assert!((recomputed - w).abs() <= 1e-12);
    }

    #[test]
    fn triangle_margin_bounds_two_cycles(c in sized_matrix(5, -0.5, 1.0)) {
        let costs = SwitchingCosts::constant(&c).unwrap();
        let grid = tiny_grid();
        let tri = check_triangle(&costs, &grid).unwrap();
        let m = c.len();
        // With i = k the triangle entry is the 2-cycle c_ij + c_ji.
        let two_cycle = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| c[i][j] + c[j][i])
            .fold(f64::INFINITY, f64::min);
        prop_assert!(two_cycle >= tri.worst);
    }

    #[test]
    fn validators_are_deterministic(c in sized_matrix(5, -0.2, 1.0)) {
        let costs = SwitchingCosts::constant(&c).unwrap();
        let grid = tiny_grid();
        prop_assert_eq!(check_no_loop(&costs, &grid).unwrap(), check_no_loop(&costs, &grid).unwrap());
        prop_assert_eq!(check_triangle(&costs, &grid).unwrap(), check_triangle(&costs, &grid).unwrap());
    }

    #[test]
    fn projection_is_idempotent_and_feasible((c, u) in node_case(4)) {
        let m = c.len();
        let costs = SwitchingCosts::constant(&c).unwrap();
        let (once, _) = obstacle_project(&u, &costs, 0.0, &[0.5], 1e-13, 1000).unwrap();
        let (twice, _) = obstacle_project(&once, &costs, 0.0, &[0.5], 1e-13, 1000).unwrap();
        for i in 0..m {
            prop_assert!((once[i] - twice[i]).abs() <= 1e-12);
            prop_assert!(once[i] >= u[i]);
            prop_assert!(once[i] >= eval_obstacle(&once, &costs, i, 0.0, &[0.5]).unwrap() - 1e-12);
        }
    }

    #[test]
    fn comparison_with_itself_is_zero(values in function_values()) {
        let u = random_function(values);
        let region = vec![true; u.grid().len()];
        for mode in [ComparisonMode::FullBoundary, ComparisonMode::NoBoundary, ComparisonMode::MixedRegion] {
            let r = comparison_check(&u, &u, mode, Some(&region), 0.0).unwrap();
            prop_assert!(r.passed);
            prop_assert_eq!(r.sup_difference, 0.0);
        }
    }

    #[test]
    fn comparison_both_ways_bounds_difference(values in function_values(), noise in prop::collection::vec(-1e-3..1e-3f64, 2 * 6 * 11)) {
        let u = random_function(values.clone());
        let v = random_function(values.iter().zip(&noise).map(|(a, b)| a + b).collect());
        let tol = 1e-3;
        let uv = comparison_check(&u, &v, ComparisonMode::FullBoundary, None, tol).unwrap();
        let vu = comparison_check(&v, &u, ComparisonMode::FullBoundary, None, tol).unwrap();
        if uv.passed && vu.passed {
            prop_assert!(u.max_abs_diff(&v).unwrap() <= tol);
        }
    }

    #[test]
    fn grid_invariants(lo in -2.0..0.0f64, len in 0.5..3.0f64, cells in 4usize..40, steps in 1usize..30, horizon in 0.1..2.0f64) {
        let domain = Domain::interval(lo, lo + len).unwrap();
        let grid = SpaceTimeGrid::new(&domain, horizon, len / cells as f64, horizon / steps as f64).unwrap();
        prop_assert!((grid.steps() as f64 * grid.dt() - horizon).abs() <= 1e-12);
        for node in grid.nodes() {
            prop_assert!(domain.contains(&node.x));
            if let Some(n) = node.normal() {
                let exact = domain.normal(&node.x).unwrap();
                prop_assert!((n[0] - exact[0]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn disk_grid_normals_match_domain() {
    let cfg = fixtures::config(fixtures::DISK);
    let grid = cfg.grid(None, None).unwrap();
    let domain = cfg.domain().unwrap();
    let mut boundary = 0;
    for node in grid.nodes() {
        assert!(domain.contains(&node.x));
        if let Some(n) = node.normal() {
            boundary += 1;
            let exact = domain.normal(&node.x).unwrap();
            let norm: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
            for (a, b) in n.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
    assert!(boundary > 0);
}

#[test]
fn doubling_sampling_density_keeps_passes() {
    for text in fixtures::ALL {
        let cfg = fixtures::config(text);
        let (spec, grid) = cfg.build(None, None).unwrap();
        let fine = grid.refined(2.0).unwrap();
        let coarse = validate(&spec, &grid, ValidateOptions::default());
        let dense = validate(&spec, &fine, ValidateOptions::default());
        for c in &coarse.checks {
            if c.passed {
                assert!(dense.check(&c.name).unwrap().passed, "{} flipped", c.name);
            }
        }
    }
}
