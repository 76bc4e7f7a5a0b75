//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints its own PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oswitch_core::assumptions::{check_no_loop, check_triangle, Witness};
use oswitch_core::barriers::{build_phi, eval_barrier_sub, eval_barrier_super, sample_barriers, select_constants};
use oswitch_core::fixtures;
use oswitch_core::problem::{normalize_monotonicity, scale_solution, unscale_solution};
use oswitch_core::scheme::{complementarity_residual, obstacle_project, solve, SchemeConfig, SchemeMode};
use oswitch_core::verify::{
    bracket_check, comparison_check, convergence_study, default_tolerance, residual_check, ComparisonMode,
    Reference, Role,
};
use oswitch_core::{Domain, Field, GridFunction, InitialData, ProblemSpec, SpaceTimeGrid, SwitchingCosts};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn load(text: &str) -> (ProblemSpec, Arc<SpaceTimeGrid>) {
    let (spec, grid) = fixtures::config(text).build(None, None).unwrap();
    (spec, Arc::new(grid))
}

fn solve_implicit(spec: &ProblemSpec, grid: &Arc<SpaceTimeGrid>) -> GridFunction {
    solve(spec, grid.clone(), &SchemeConfig::default()).unwrap().solution
}

fn random_costs(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 0.0 } else { rng.gen_range(lo..hi) }).collect())
        .collect()
}

/// Minimum simple cycle by enumerating ordered vertex sequences that start at
/// their smallest vertex.
fn brute_min_cycle(c: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let m = c.len();
    let mut best = (f64::INFINITY, Vec::new());
    for len in 2..=m {
        for seq in (0..m).permutations(len) {
            if seq[0] != *seq.iter().min().unwrap() {
                continue;
            }
            let w: f64 = (0..len).map(|k| c[seq[k]][seq[(k + 1) % len]]).sum();
            if w < best.0 {
                best = (w, seq);
            }
        }
    }
    best
}

fn brute_worst_triangle(c: &[Vec<f64>]) -> (f64, [usize; 3]) {
    let m = c.len();
    let mut best = (f64::INFINITY, [0; 3]);
    for (i, j, k) in (0..m).cartesian_product(0..m).cartesian_product(0..m).map(|((i, j), k)| (i, j, k)) {
        if j == i || j == k {
            continue;
        }
        let v = c[i][j] + c[j][k] - c[i][k];
        if v < best.0 {
            best = (v, [i, j, k]);
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = SpaceTimeGrid::new(&Domain::interval(0.0, 1.0).unwrap(), 1.0, 0.5, 0.5).unwrap();
    let mut failing_loops = 0;
    let mut failing_triangles = 0;
    for case in 0..200 {
        let m = rng.gen_range(2..=5);
        let c = random_costs(&mut rng, m, -0.3, 1.0);
        let costs = SwitchingCosts::constant(&c).unwrap();

        let entry = check_no_loop(&costs, &grid).unwrap();
        let (w, cyc) = brute_min_cycle(&c);
        ensure(entry.passed == (w > 1e-12), format!("case {case}: no_loop verdict"))?;
        if !entry.passed {
            failing_loops += 1;
            let expected: Vec<usize> = cyc.iter().map(|v| v + 1).collect();
            match &entry.witness {
                Some(Witness::Cycle { cycle, .. }) => {
                    ensure(*cycle == expected, format!("case {case}: cycle {cycle:?} vs {expected:?}"))?
                }
                other => return Err(format!("case {case}: witness {other:?}")),
            }
        }

        let entry = check_triangle(&costs, &grid).unwrap();
        let (v, [i, j, k]) = brute_worst_triangle(&c);
        ensure(entry.passed == (v >= -1e-12), format!("case {case}: triangle verdict"))?;
        if !entry.passed {
            failing_triangles += 1;
            match entry.witness {
                Some(Witness::Triple { i: a, j: b, k: d, .. }) => {
                    ensure([a, b, d] == [i + 1, j + 1, k + 1], format!("case {case}: triple"))?
                }
                other => return Err(format!("case {case}: witness {other:?}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.2} s"))?;
    ensure(failing_loops > 0 && failing_triangles > 0, "sample never exercised a failing verdict")?;
    Ok(format!(
        "200 matrices, {failing_loops} loop and {failing_triangles} triangle failures matched, {secs:.2} s"
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=4);
        let c = random_costs(&mut rng, m, 0.01, 1.0);
        let costs = SwitchingCosts::constant(&c).unwrap();
        let cand: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (got, _) = obstacle_project(&cand, &costs, 0.0, &[0.5], 1e-14, 1000).unwrap();

        // Jacobi fixed-point iteration run far past convergence.
        let mut u = cand.clone();
        for _ in 0..10_000 {
            u = (0..m)
                .map(|i| {
                    (0..m)
                        .filter(|&j| j != i)
                        .map(|j| u[j] - c[i][j])
                        .fold(cand[i], f64::max)
                })
                .collect();
        }
        for i in 0..m {
            worst = worst.max((got[i] - u[i]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-10, format!("max deviation {worst:e}"))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("max deviation {worst:e}, {secs:.2} s"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = fixtures::config(fixtures::MMS);
    let spec = cfg.spec().unwrap();
    let exact = cfg.exact().unwrap().unwrap();
    let grids: Vec<Arc<SpaceTimeGrid>> = [1.0, 0.5, 0.25]
        .iter()
        .map(|s| Arc::new(cfg.grid(Some(0.1 * s), Some(0.05 * s)).unwrap()))
        .collect();
    let w = |i: usize, t: f64, x: &[f64]| exact[i].eval(t, x);
    let rows = convergence_study(&grids, |g| Ok(solve_implicit(&spec, g)), Reference::Exact(&w)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let summary = rows
        .iter()
        .map(|r| format!("h={} err={:.3e} rate={}", r.h, r.error, r.rate.map_or("-".into(), |v| format!("{v:.2}"))))
        .join("; ");
    for pair in rows.windows(2) {
        ensure(pair[1].error < pair[0].error, format!("error grew: {summary}"))?;
    }
    for r in &rows[1..] {
        ensure(r.rate.unwrap() >= 0.8, format!("rate below 0.8: {summary}"))?;
    }
    ensure(secs < 60.0, format!("took {secs:.2} s"))?;
    Ok(format!("{summary}; {secs:.2} s"))
}

fn criterion_4() -> Outcome {
    let cfg = fixtures::config(fixtures::CONSTANT);
    let spec = cfg.spec().unwrap();
    let (anchors, eps) = cfg.anchors().unwrap().unwrap();
    let phi = build_phi(&spec.domain).unwrap();
    let mut lines = Vec::new();
    for h in [0.05, 0.025] {
        let grid = Arc::new(cfg.grid(Some(h), Some(h)).unwrap());
        let tol = default_tolerance(&grid, 10.0);
        for (x, mode) in &anchors {
            let params = select_constants(&spec, &phi, &grid, x, *mode, eps).unwrap();
            let (lower, upper) = sample_barriers(&params, &spec, &grid).unwrap();
            let sup = residual_check(&upper, &spec, Role::Supersolution, tol).unwrap();
            let sub = residual_check(&lower, &spec, Role::Subsolution, tol).unwrap();
            ensure(sup.passed, format!("h={h}: V violation {}", sup.worst_violation))?;
            ensure(sub.passed, format!("h={h}: U violation {}", sub.worst_violation))?;
            lines.push(format!("h={h}: V {:.2e}, U {:.2e}", sup.worst_violation, sub.worst_violation));
        }
    }
    Ok(lines.join("; "))
}

fn criterion_5() -> Outcome {
    let cfg = fixtures::config(fixtures::TWO_MODE);
    let (spec, grid) = load(fixtures::TWO_MODE);
    let (anchors, eps) = cfg.anchors().unwrap().unwrap();
    ensure(anchors.len() == 5, "fixture must carry 5 anchors")?;
    let u = solve_implicit(&spec, &grid);
    let tol = default_tolerance(&grid, 10.0);
    let report = bracket_check(&u, &spec, &anchors, eps, tol).unwrap();
    ensure(report.passed, format!("min margin {} below -{tol}", report.min_margin))?;
    ensure(report.min_margin >= -tol, format!("min margin {}", report.min_margin))?;
    Ok(format!("5 anchors, min margin {:.4}, reliable {}", report.min_margin, report.reliable))
}

fn criterion_6() -> Outcome {
    let (spec, grid) = load(fixtures::TWO_MODE);
    let shifted_g: Vec<Field> = spec
        .initial
        .g
        .iter()
        .map(|g| {
            let g = g.clone();
            Field::tx(move |t, x| g.eval(t, x) + 0.1)
        })
        .collect();
    let shifted = spec.with_initial(InitialData::new(shifted_g)).unwrap();
    let u = solve_implicit(&spec, &grid);
    let v = solve_implicit(&shifted, &grid);
    let gap = u
        .values()
        .iter()
        .zip(v.values().iter())
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    ensure(gap >= -1e-8, format!("shifted solution dips {gap:e} below"))?;
    let report = comparison_check(&u, &v, ComparisonMode::FullBoundary, None, 1e-8).unwrap();
    ensure(report.passed, format!("comparison sup {}", report.sup_difference))?;
    Ok(format!("min (v - u) = {gap:.6}, sup (u - v) = {:.6}", report.sup_difference))
}

fn criterion_7() -> Outcome {
    let (spec, grid) = load(fixtures::TWO_MODE);
    let v = solve_implicit(&spec, &grid);
    let u = v.map_with_time(|_, x| x + 1.0).unwrap();
    let report = comparison_check(&u, &v, ComparisonMode::NoBoundary, None, 1e-12).unwrap();
    let bound = report.boundary_bound.ok_or("no boundary bound reported")?;
    ensure(report.passed, "no_boundary comparison failed")?;
    ensure((report.sup_difference - 1.0).abs() <= 1e-12, format!("sup {}", report.sup_difference))?;
    ensure((bound - 1.0).abs() <= 1e-12, format!("bound {bound}"))?;
    Ok(format!("sup {} bound {}", report.sup_difference, bound))
}

fn criterion_8() -> Outcome {
    let (spec, grid) = load(fixtures::TWO_MODE);
    let phi = build_phi(&spec.domain).unwrap();
    let anchor = [0.3];
    let mode = 1;
    let g = spec.initial.eval(mode, &anchor);
    let mut prev: Option<(f64, f64)> = None;
    for eps in [0.4, 0.2, 0.1, 0.05] {
        let p = select_constants(&spec, &phi, &grid, &anchor, mode, eps).unwrap();
        let up = eval_barrier_super(&p, &spec, mode, 0.0, &anchor) - g;
        let down = g - eval_barrier_sub(&p, &spec, mode, 0.0, &anchor);
        ensure((up - eps).abs() <= 1e-12, format!("eps {eps}: V - g = {up}"))?;
        ensure((down - eps).abs() <= 1e-12, format!("eps {eps}: g - U = {down}"))?;
        if let Some((pu, pd)) = prev {
            ensure(up < pu && down < pd, format!("eps {eps}: gap not decreasing"))?;
        }
        prev = Some((up, down));
    }
    Ok("V - g and g - U equal eps for eps in {0.4, 0.2, 0.1, 0.05}".into())
}

fn criterion_9() -> Outcome {
    let (spec, grid) = load(fixtures::TWO_MODE);
    let lambda_bar = 0.5;
    let direct = solve_implicit(&spec, &grid);
    let round = unscale_solution(&scale_solution(&direct, lambda_bar).unwrap(), lambda_bar).unwrap();
    let exact_err = round.max_abs_diff(&direct).unwrap();
    ensure(exact_err <= 1e-12, format!("scale/unscale drift {exact_err:e}"))?;

    let scaled = normalize_monotonicity(&spec, lambda_bar).unwrap();
    let back = unscale_solution(&solve_implicit(&scaled, &grid), lambda_bar).unwrap();
    let err = back.max_abs_diff(&direct).unwrap();
    let tol = 5.0 * (grid.h() + grid.dt());
    ensure(err <= tol, format!("transformed solve differs by {err} > {tol}"))?;
    Ok(format!("transformed solve diff {err:.2e} (tol {tol:.3}), round trip {exact_err:.1e}"))
}

fn criterion_10() -> Outcome {
    let (spec, grid) = load(fixtures::TWO_MODE);
    let result = solve(&spec, grid, &SchemeConfig::default()).unwrap();
    let active: usize = result.active.iter().sum();
    ensure(active > 0, "obstacle never active")?;
    let r = complementarity_residual(&spec, &result.solution, SchemeMode::Implicit).unwrap();
    ensure(r <= 1e-8, format!("complementarity residual {r:e}"))?;
    Ok(format!("max |min(step, u - Mu)| = {r:.2e}, {active} active node-levels"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("validator matches brute-force oracle", criterion_1),
        ("obstacle projection matches fixed-point oracle", criterion_2),
        ("manufactured-solution convergence rate", criterion_3),
        ("barrier residual signs", criterion_4),
        ("barrier bracketing of solver output", criterion_5),
        ("discrete comparison under shifted data", criterion_6),
        ("interior sup bounded by parabolic boundary", criterion_7),
        ("eps-envelope anchor identity", criterion_8),
        ("exponential scaling round trip", criterion_9),
        ("implicit complementarity", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
