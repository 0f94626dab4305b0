//! Cross-checks of the physical-space stepper against the spectral solvers:
//! oracle equivalence over many seeds and the strong-rate sanity run against
//! the time-scheme reference.

use std::sync::Arc;

use spde_core::coeffs::{build_discrete_from_continuous, ContinuousCoefficients, ScalarField};
use spde_core::expr::Expr;
use spde_core::grid::TorusGrid;
use spde_core::noise::{sample_increments, TimeGrid};
use spde_core::richardson::estimate_order;
use spde_core::solver::{solve_trajectory, LinearSolveConfig, SchemeProblem, SolveMethod};
use spde_core::spectral::{solve_discrete_spectral, solve_time_scheme_spectral};
use spde_core::stencil::Stencil;

fn heat_coeffs(a: f64, b: f64) -> ContinuousCoefficients<f64> {
    let mut c = ContinuousCoefficients::new(1, 1);
    c.set_a(1, 1, ScalarField::Constant(a));
    c.set_b(1, 0, ScalarField::Constant(b));
    c.set_u0(ScalarField::Expr(Expr::parse("sin(2*pi*x)", 1).unwrap()));
    c
}

fn problem_at(c: &ContinuousCoefficients<f64>, n_x: usize, n: usize) -> SchemeProblem<f64> {
    let grid = TorusGrid::cube(1, 1.0, n_x).unwrap();
    let tg = TimeGrid::new(1.0, n).unwrap();
    let stencil = Arc::new(Stencil::coordinate(1));
    let dc = build_discrete_from_continuous(c, &stencil, &grid, &tg).unwrap();
    SchemeProblem::from_continuous(c, dc, grid, tg).unwrap()
}

/// Physical-space and spectral discrete solvers agree to 1e−9 sup norm for
/// constant coefficients across 20 seeds, exercising both solve routes.
#[test]
fn oracle_equivalence_twenty_seeds() {
    let c = heat_coeffs(1.0, 1.0);
    for seed in 0..20u64 {
        for (n_x, method) in [
            (16usize, SolveMethod::IterativeNonsymmetric),
            (32, SolveMethod::DirectBanded1d),
        ] {
            let p = problem_at(&c, n_x, 8);
            let noise = sample_increments(p.time_grid(), 1, seed).unwrap();
            let cfg = LinearSolveConfig {
                method,
                ..LinearSolveConfig::default()
            };
            let physical = solve_trajectory(&p, &noise, cfg).unwrap();
            let spectral = solve_discrete_spectral(&p, &noise).unwrap();
            let d = physical.max_sup_distance(&spectral).unwrap();
            assert!(d <= 1e-9, "seed {seed} n_x {n_x}: discrepancy {d:e}");
        }
    }
}

/// The base scheme converges to the time-scheme reference with strong order
/// about one in h at fixed τ (log-log slope ≥ 0.8 here).
#[test]
fn strong_rate_sanity_against_time_scheme() {
    let c = heat_coeffs(1.0, 0.8);
    let n = 32;
    let paths = 8;
    let mut pairs = Vec::new();
    for n_x in [16usize, 32, 64, 128] {
        let p = problem_at(&c, n_x, n);
        let mut mean_sq = 0.0;
        for m in 0..paths {
            let noise = sample_increments(p.time_grid(), 1, 1000 + m).unwrap();
            let vh = solve_trajectory(&p, &noise, LinearSolveConfig::direct_1d()).unwrap();
            let reference =
                solve_time_scheme_spectral(&c, p.grid(), p.time_grid(), &noise).unwrap();
            let err = vh.max_sup_distance(&reference).unwrap();
            mean_sq += err * err;
        }
        mean_sq /= paths as f64;
        pairs.push((p.grid().spacing(), mean_sq.sqrt()));
    }
    let fit = estimate_order(&pairs).unwrap();
    assert!(
        fit.slope >= 0.8,
        "strong-rate slope {} below 0.8 (pairs {pairs:?})",
        fit.slope
    );
}

/// Time-varying (but spatially constant) coefficients: the direct route
/// refactors the operator each step and still matches the per-mode oracle,
/// which evaluates the symbols at the same step indices.
#[test]
fn time_varying_coefficients_match_spectral_oracle() {
    let mut c = ContinuousCoefficients::<f64>::new(1, 1);
    c.set_a(1, 1, ScalarField::Expr(Expr::parse("1 + 0.5*t", 1).unwrap()));
    c.set_b(1, 0, ScalarField::Expr(Expr::parse("0.5*cos(t)", 1).unwrap()));
    c.set_u0(ScalarField::Expr(Expr::parse("sin(2*pi*x)", 1).unwrap()));
    let p = problem_at(&c, 16, 8);
    assert!(!p.coefficients().time_invariant());
    assert!(p.coefficients().constant_in_x());
    for seed in [1u64, 9] {
        let noise = sample_increments(p.time_grid(), 1, seed).unwrap();
        let direct = solve_trajectory(&p, &noise, LinearSolveConfig::direct_1d()).unwrap();
        let iterative = solve_trajectory(&p, &noise, LinearSolveConfig::default()).unwrap();
        let spectral = solve_discrete_spectral(&p, &noise).unwrap();
        let d1 = direct.max_sup_distance(&spectral).unwrap();
        let d2 = iterative.max_sup_distance(&spectral).unwrap();
        assert!(d1 <= 1e-9, "seed {seed}: direct vs oracle {d1:e}");
        assert!(d2 <= 1e-9, "seed {seed}: iterative vs oracle {d2:e}");
    }
}

/// Lower-order terms carried by the zero-index coefficient entries
/// (`a^{00}`, `a^{10}`, `b^{0ρ}`) flow through the stepper and match the
/// spectral oracle.
#[test]
fn lower_order_terms_match_spectral_oracle() {
    let mut c = ContinuousCoefficients::<f64>::new(1, 1);
    c.set_a(1, 1, ScalarField::Constant(1.0));
    c.set_a(0, 0, ScalarField::Constant(-0.4));
    c.set_a(1, 0, ScalarField::Constant(0.3));
    c.set_b(1, 0, ScalarField::Constant(0.7));
    c.set_b(0, 0, ScalarField::Constant(0.2));
    c.set_f(ScalarField::Constant(0.5));
    c.set_g(0, ScalarField::Expr(Expr::parse("cos(2*pi*x)", 1).unwrap()));
    c.set_u0(ScalarField::Expr(Expr::parse("sin(2*pi*x)", 1).unwrap()));
    let grid = TorusGrid::cube(1, 1.0, 32).unwrap();
    let tg = TimeGrid::new(1.0, 8).unwrap();
    let stencil = Arc::new(Stencil::coordinate(1));
    let dc = build_discrete_from_continuous(&c, &stencil, &grid, &tg).unwrap();
    let p = SchemeProblem::from_continuous(&c, dc, grid, tg).unwrap();
    for seed in [3u64, 42] {
        let noise = sample_increments(p.time_grid(), 1, seed).unwrap();
        let physical = solve_trajectory(&p, &noise, LinearSolveConfig::direct_1d()).unwrap();
        let spectral = solve_discrete_spectral(&p, &noise).unwrap();
        let d = physical.max_sup_distance(&spectral).unwrap();
        assert!(d <= 1e-9, "seed {seed}: lower-order discrepancy {d:e}");
    }
}

/// Two-dimensional problem through the iterative route, cross-checked
/// against the spectral oracle.
#[test]
fn two_dimensional_stepper_matches_spectral_oracle() {
    let mut c = ContinuousCoefficients::<f64>::new(2, 1);
    c.set_a(1, 1, ScalarField::Constant(1.0));
    c.set_a(2, 2, ScalarField::Constant(0.5));
    c.set_b(1, 0, ScalarField::Constant(0.6));
    c.set_u0(ScalarField::Func(Arc::new(|_t, x: &[f64]| {
        let two_pi = 2.0 * std::f64::consts::PI;
        (two_pi * x[0]).sin() * (two_pi * x[1]).cos()
    })));
    let grid = TorusGrid::cube(2, 1.0, 8).unwrap();
    let tg = TimeGrid::new(1.0, 6).unwrap();
    let stencil = Arc::new(Stencil::coordinate(2));
    let dc = build_discrete_from_continuous(&c, &stencil, &grid, &tg).unwrap();
    let p = SchemeProblem::from_continuous(&c, dc, grid, tg).unwrap();
    let noise = sample_increments(p.time_grid(), 1, 17).unwrap();
    let physical = solve_trajectory(&p, &noise, LinearSolveConfig::default()).unwrap();
    let spectral = solve_discrete_spectral(&p, &noise).unwrap();
    let d = physical.max_sup_distance(&spectral).unwrap();
    assert!(d <= 1e-9, "2-d discrepancy {d:e}");
}

/// A dumped noise path drives a later run to the identical trajectory.
#[test]
fn dumped_noise_paths_reproduce_runs() {
    use spde_core::noise::{read_path, write_path};
    let c = heat_coeffs(1.0, 0.8);
    let p = problem_at(&c, 16, 8);
    let noise = sample_increments(p.time_grid(), 1, 5150).unwrap();
    let mut buf = Vec::new();
    write_path(&noise, &mut buf).unwrap();
    let restored = read_path::<f64>(buf.as_slice()).unwrap();
    let a = solve_trajectory(&p, &noise, LinearSolveConfig::direct_1d()).unwrap();
    let b = solve_trajectory(&p, &restored, LinearSolveConfig::direct_1d()).unwrap();
    assert_eq!(a, b);
}

/// The same noise path drives every mesh size in a coupled run; solutions on
/// nested grids then converge to each other pathwise.
#[test]
fn noise_coupling_gives_pathwise_convergence() {
    let c = heat_coeffs(1.0, 0.8);
    let tg = TimeGrid::new(1.0, 32).unwrap();
    let noise = sample_increments(&tg, 1, 4242).unwrap();
    let mut prev_err: Option<f64> = None;
    for n_x in [16usize, 32, 64] {
        let coarse = problem_at(&c, n_x, 32);
        let fine = problem_at(&c, 2 * n_x, 32);
        let vc = solve_trajectory(&coarse, &noise, LinearSolveConfig::direct_1d()).unwrap();
        let vf = solve_trajectory(&fine, &noise, LinearSolveConfig::direct_1d()).unwrap();
        let err = vf
            .restrict_to_coarser(1)
            .unwrap()
            .max_sup_distance(&vc)
            .unwrap();
        if let Some(prev) = prev_err {
            assert!(err < prev, "coupled error not shrinking: {err} vs {prev}");
        }
        prev_err = Some(err);
    }
}
