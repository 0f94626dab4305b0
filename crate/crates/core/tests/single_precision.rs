//! Smoke tests of the `f32` instantiation: every kernel is generic over the
//! scalar type, and the single-precision path must produce the same answers
//! at its own accuracy.

use std::sync::Arc;

use spde_core::coeffs::{build_discrete_from_continuous, ContinuousCoefficients, ScalarField};
use spde_core::grid::{GridFunction, TorusGrid};
use spde_core::noise::{sample_increments, TimeGrid};
use spde_core::richardson::vandermonde_weights;
use spde_core::solver::{solve_trajectory, LinearSolveConfig, SchemeProblem};
use spde_core::spectral::solve_discrete_spectral;
use spde_core::stencil::Stencil;

#[test]
fn difference_calculus_in_f32() {
    let grid = TorusGrid::<f32>::cube(1, 1.0, 16).unwrap();
    let h = grid.spacing();
    let f = GridFunction::sample(grid, |x| x[0] * x[0]);
    let dd = f.diff(&[1], -h).unwrap().diff(&[1], h).unwrap();
    for v in &dd.values()[1..15] {
        assert!((v - 2.0).abs() < 1e-3, "second difference {v}");
    }
    assert!(
        (GridFunction::<f32>::constant(TorusGrid::cube(1, 1.0, 8).unwrap(), 1.0).l2_grid_norm()
            - 1.0)
            .abs()
            < 1e-6
    );
}

#[test]
fn noise_and_weights_in_f32() {
    let tg = TimeGrid::<f32>::new(1.0, 32).unwrap();
    let a = sample_increments::<f32>(&tg, 2, 9).unwrap();
    let b = sample_increments::<f32>(&tg, 2, 9).unwrap();
    assert_eq!(a, b);

    let w = vandermonde_weights::<f32>(2).unwrap();
    assert!((w.weights()[0] - 1.0 / 3.0).abs() < 1e-5);
    assert!((w.weights()[1] + 2.0).abs() < 1e-5);
    assert!((w.weights()[2] - 8.0 / 3.0).abs() < 1e-5);
    for r in w.moment_residuals() {
        assert!(r.abs() < 1e-5);
    }
}

#[test]
fn scheme_solve_in_f32_tracks_the_f64_solution() {
    fn solve<T: spde_core::Scalar>(tol: T) -> Vec<f64> {
        let mut c = ContinuousCoefficients::<T>::new(1, 1);
        c.set_a(1, 1, ScalarField::Constant(T::one()));
        c.set_b(1, 0, ScalarField::Constant(spde_core::cast::<T>(0.5)));
        c.set_u0(ScalarField::Func(Arc::new(|_t, x: &[T]| {
            (spde_core::cast::<T>(2.0 * std::f64::consts::PI) * x[0]).sin()
        })));
        let grid = TorusGrid::<T>::cube(1, T::one(), 16).unwrap();
        let tg = TimeGrid::new(T::one(), 8).unwrap();
        let stencil = Arc::new(Stencil::coordinate(1));
        let dc = build_discrete_from_continuous(&c, &stencil, &grid, &tg).unwrap();
        let p = SchemeProblem::from_continuous(&c, dc, grid, tg).unwrap();
        let noise = sample_increments(&tg, 1, 12).unwrap();
        let cfg = LinearSolveConfig {
            rel_tol: tol,
            ..LinearSolveConfig::direct_1d()
        };
        let traj = solve_trajectory(&p, &noise, cfg).unwrap();
        // also cross-check against the spectral oracle in the same precision
        let spectral = solve_discrete_spectral(&p, &noise).unwrap();
        let d = traj.max_sup_distance(&spectral).unwrap();
        assert!(
            d.to_f64().unwrap() < 2e-4,
            "oracle discrepancy {:?}",
            d.to_f64()
        );
        traj.state(8)
            .values()
            .iter()
            .map(|v| v.to_f64().unwrap())
            .collect()
    }
    let fine = solve::<f64>(1e-12);
    let coarse = solve::<f32>(1e-5);
    for (a, b) in fine.iter().zip(&coarse) {
        assert!((a - b).abs() < 5e-4, "f32 vs f64: {a} vs {b}");
    }
}
