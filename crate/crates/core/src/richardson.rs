//! Richardson extrapolation over dyadic mesh families: the Vandermonde
//! weights, the extrapolant over nested trajectories, accelerated difference
//! approximations and the empirical order estimator.
//!
//! The weights `β = (1, 0, ..., 0) V^{-1}` for `V^{ij} = 2^{-(i-1)(j-1)}`
//! satisfy `Σ_j β_j = 1` and `Σ_j β_j 2^{-ij} = 0` for `i = 1..k`; the
//! extrapolant `v̄^h = Σ_j β_j v^{2^{-j} h}` therefore cancels the first `k`
//! powers of `h` in the error expansion.

use thiserror::Error;

use crate::grid::GridError;
use crate::linalg::{DenseLu, LinalgError};
use crate::scalar::{cast, Scalar};
use crate::solver::{SolveError, Trajectory};
use crate::stencil::OffsetTuple;

/// Conditioning guard: the dyadic Vandermonde system degrades geometrically.
pub const MAX_EXTRAPOLATION_ORDER: usize = 12;

#[derive(Debug, Error)]
pub enum RichardsonError {
    #[error("extrapolation order {0} exceeds the supported maximum {MAX_EXTRAPOLATION_ORDER}")]
    OrderTooLarge(usize),
    #[error("expected {want} trajectories for order {order}, got {got}")]
    LevelCount {
        got: usize,
        want: usize,
        order: usize,
    },
    #[error("trajectories do not share one time grid")]
    TimeGridMismatch,
    #[error("level {0} is not the 2^{0}-fold refinement of the coarsest grid")]
    GridsNotNested(usize),
    #[error("order estimation needs at least {want} pairs, got {got}")]
    TooFewPairs { got: usize, want: usize },
    #[error("error value at index {0} is not positive; it sits at or below the solver/statistical floor and cannot be fitted")]
    NonpositiveError(usize),
    #[error("mesh sizes must be distinct (index {0})")]
    DuplicateMesh(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] Box<SolveError>),
}

/// Extrapolation weights `β_0..β_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonWeights<T: Scalar> {
    order: usize,
    weights: Vec<T>,
}

impl<T: Scalar> RichardsonWeights<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Residuals of the defining moment conditions: entry 0 is `Σ β_j − 1`,
    /// entry `i ≥ 1` is `Σ β_j 2^{−ij}`.
    pub fn moment_residuals(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.order + 1);
        for i in 0..=self.order {
            let mut acc = T::zero();
            for (j, &b) in self.weights.iter().enumerate() {
                acc += b * cast::<T>(0.5f64.powi((i * j) as i32));
            }
            if i == 0 {
                acc -= T::one();
            }
            out.push(acc);
        }
        out
    }
}

/// Solves `V β = e_1` (the system, not an explicit inverse) with partial
/// pivoting plus one refinement pass for the graded entries.
pub fn vandermonde_weights<T: Scalar>(k: usize) -> Result<RichardsonWeights<T>, RichardsonError> {
    if k > MAX_EXTRAPOLATION_ORDER {
        return Err(RichardsonError::OrderTooLarge(k));
    }
    let n = k + 1;
    let mut mat = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            mat[i * n + j] = cast::<T>(0.5f64.powi((i * j) as i32));
        }
    }
    let lu = DenseLu::factor(mat.clone(), n)?;
    let mut rhs = vec![T::zero(); n];
    rhs[0] = T::one();
    let mut beta = lu.solve(&rhs)?;
    // one refinement pass against the exact matrix
    let mut residual = rhs;
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc += mat[i * n + j] * beta[j];
        }
        residual[i] -= acc;
    }
    let correction = lu.solve(&residual)?;
    for (b, c) in beta.iter_mut().zip(&correction) {
        *b += *c;
    }
    Ok(RichardsonWeights {
        order: k,
        weights: beta,
    })
}

/// `v̄^h_i(x) = Σ_j β_j v^{2^{−j} h}_i(x)` on the coarsest grid.
///
/// `trajs[j]` must live on the `2^j`-fold refinement of `trajs[0]`'s grid and
/// all must share one time grid (and, upstream, one noise path).
pub fn extrapolate<T: Scalar>(
    trajs: &[Trajectory<T>],
    w: &RichardsonWeights<T>,
) -> Result<Trajectory<T>, RichardsonError> {
    if trajs.len() != w.order() + 1 {
        return Err(RichardsonError::LevelCount {
            got: trajs.len(),
            want: w.order() + 1,
            order: w.order(),
        });
    }
    let coarse = &trajs[0];
    let base_counts = coarse.grid().points_per_axis().to_vec();
    for (j, t) in trajs.iter().enumerate() {
        if t.time_grid() != coarse.time_grid() {
            return Err(RichardsonError::TimeGridMismatch);
        }
        let factor = 1usize << j;
        let ok = t.grid().side_lengths() == coarse.grid().side_lengths()
            && t.grid()
                .points_per_axis()
                .iter()
                .zip(&base_counts)
                .all(|(&fine, &base)| fine == base * factor);
        if !ok {
            return Err(RichardsonError::GridsNotNested(j));
        }
    }

    let n = coarse.time_grid().steps();
    let mut states = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut acc = coarse.state(i).scaled(w.weights()[0]);
        for (j, t) in trajs.iter().enumerate().skip(1) {
            let restricted = t.state(i).restrict_to_coarser(j)?;
            acc.axpy(w.weights()[j], &restricted)?;
        }
        states.push(acc);
    }
    Trajectory::new(states, *coarse.time_grid()).map_err(|e| RichardsonError::Solve(Box::new(e)))
}

/// Applies a composite difference to every state of a trajectory; with the
/// extrapolant as input this yields the accelerated derivative
/// approximations.
pub fn extrapolated_difference<T: Scalar>(
    traj: &Trajectory<T>,
    tuple: &OffsetTuple,
    h_signed: T,
) -> Result<Trajectory<T>, RichardsonError> {
    let states = traj
        .states()
        .iter()
        .map(|s| s.composite_diff(tuple, h_signed))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::new(states, *traj.time_grid()).map_err(|e| RichardsonError::Solve(Box::new(e)))
}

/// Least-squares fit of `log(error)` against `log(h)` plus per-adjacent-pair
/// orders; the slope is the empirical convergence order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit<T: Scalar> {
    pub slope: T,
    pub intercept: T,
    /// `log(e_j / e_{j+1}) / log(h_j / h_{j+1})` for consecutive pairs.
    pub pair_orders: Vec<T>,
}

pub fn estimate_order<T: Scalar>(pairs: &[(T, T)]) -> Result<OrderFit<T>, RichardsonError> {
    if pairs.len() < 3 {
        return Err(RichardsonError::TooFewPairs {
            got: pairs.len(),
            want: 3,
        });
    }
    for (idx, &(h, e)) in pairs.iter().enumerate() {
        if !(e > T::zero()) || !e.is_finite() {
            return Err(RichardsonError::NonpositiveError(idx));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(RichardsonError::DuplicateMesh(idx));
        }
        if pairs[..idx].iter().any(|&(h2, _)| h2 == h) {
            return Err(RichardsonError::DuplicateMesh(idx));
        }
    }
    let n = cast::<T>(pairs.len() as f64);
    let logs: Vec<(T, T)> = pairs.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let sx = logs.iter().fold(T::zero(), |a, &(x, _)| a + x);
    let sy = logs.iter().fold(T::zero(), |a, &(_, y)| a + y);
    let sxx = logs.iter().fold(T::zero(), |a, &(x, _)| a + x * x);
    let sxy = logs.iter().fold(T::zero(), |a, &(x, y)| a + x * y);
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mut pair_orders = Vec::with_capacity(pairs.len() - 1);
    for w in logs.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        pair_orders.push((y0 - y1) / (x0 - x1));
    }
    Ok(OrderFit {
        slope,
        intercept,
        pair_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridFunction, TorusGrid};
    use crate::noise::TimeGrid;
    use crate::stencil::Stencil;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn weights_small_orders() {
        let w0 = vandermonde_weights::<f64>(0).unwrap();
        assert_eq!(w0.weights(), &[1.0]);
        let w1 = vandermonde_weights::<f64>(1).unwrap();
        assert!((w1.weights()[0] + 1.0).abs() < 1e-14);
        assert!((w1.weights()[1] - 2.0).abs() < 1e-14);
        let w2 = vandermonde_weights::<f64>(2).unwrap();
        assert!((w2.weights()[0] - 1.0 / 3.0).abs() < 1e-13);
        assert!((w2.weights()[1] + 2.0).abs() < 1e-13);
        assert!((w2.weights()[2] - 8.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn moment_identities_hold_up_to_max_order() {
        for k in 0..=MAX_EXTRAPOLATION_ORDER {
            let w = vandermonde_weights::<f64>(k).unwrap();
            for (i, r) in w.moment_residuals().iter().enumerate() {
                assert!(r.abs() <= 1e-12, "k={k} moment {i}: residual {r:e}");
            }
        }
        assert!(vandermonde_weights::<f64>(13).is_err());
    }

    #[test]
    fn weights_match_exact_rational_oracle() {
        for k in 0..=6 {
            let w = vandermonde_weights::<f64>(k).unwrap();
            let exact = spde_oracles::vandermonde_weights_exact(k);
            for (j, (got, want_q)) in w.weights().iter().zip(&exact).enumerate() {
                let want = spde_oracles::q_to_f64(want_q);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "k={k} β_{j}: {got} vs {want}"
                );
            }
        }
    }

    fn synthetic_trajectory(
        n_x: usize,
        n_steps: usize,
        value: impl Fn(usize, f64) -> f64,
    ) -> Trajectory<f64> {
        let grid = TorusGrid::cube(1, 1.0, n_x).unwrap();
        let tg = TimeGrid::new(1.0, n_steps).unwrap();
        let states = (0..=n_steps)
            .map(|i| GridFunction::sample(grid.clone(), |x| value(i, x[0])))
            .collect();
        Trajectory::new(states, tg).unwrap()
    }

    #[test]
    fn order_zero_extrapolation_is_identity() {
        let t = synthetic_trajectory(8, 3, |i, x| (TWO_PI * x).sin() + i as f64);
        let w = vandermonde_weights::<f64>(0).unwrap();
        let out = extrapolate(std::slice::from_ref(&t), &w).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn equal_inputs_reproduce_the_input() {
        // Σ β_j = 1, so identical (restricted) trajectories come back out
        let base = |i: usize, x: f64| (TWO_PI * x).sin() * (1.0 + 0.25 * i as f64);
        let levels: Vec<_> = (0..3)
            .map(|j| synthetic_trajectory(8 << j, 3, base))
            .collect();
        let w = vandermonde_weights::<f64>(2).unwrap();
        let out = extrapolate(&levels, &w).unwrap();
        let want = synthetic_trajectory(8, 3, base);
        let d = out.max_sup_distance(&want).unwrap();
        assert!(d < 1e-12, "distance {d}");
    }

    #[test]
    fn extrapolation_annihilates_low_order_terms() {
        // v^{h_j} = V + h_j W₁ + h_j² W₂ exactly: k = 2 recovers V
        let base_h = 1.0 / 8.0;
        let make = |j: usize| {
            let h = base_h / (1 << j) as f64;
            synthetic_trajectory(8 << j, 3, move |i, x| {
                let ti = 1.0 + 0.1 * i as f64;
                ti * ((TWO_PI * x).sin()
                    + h * (TWO_PI * x).cos()
                    + h * h * (2.0 * TWO_PI * x).sin())
            })
        };
        let levels: Vec<_> = (0..3).map(make).collect();
        let w = vandermonde_weights::<f64>(2).unwrap();
        let out = extrapolate(&levels, &w).unwrap();
        let clean = synthetic_trajectory(8, 3, |i, x| (1.0 + 0.1 * i as f64) * (TWO_PI * x).sin());
        let d = out.max_sup_distance(&clean).unwrap();
        assert!(d <= 1e-10, "cancellation residue {d}");
    }

    #[test]
    fn extrapolation_is_linear_in_inputs() {
        let mk = |scale: f64| {
            (0..2)
                .map(|j| {
                    synthetic_trajectory(8 << j, 2, move |i, x| {
                        scale * (i as f64 + (TWO_PI * x).cos())
                    })
                })
                .collect::<Vec<_>>()
        };
        let w = vandermonde_weights::<f64>(1).unwrap();
        let a = extrapolate(&mk(1.0), &w).unwrap();
        let b = extrapolate(&mk(2.5), &w).unwrap();
        for i in 0..=2 {
            for (x, y) in a.state(i).values().iter().zip(b.state(i).values()) {
                assert!((2.5 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_levels_are_rejected() {
        let t0 = synthetic_trajectory(8, 3, |_, x| x);
        let t1 = synthetic_trajectory(12, 3, |_, x| x); // not 2×8
        let w = vandermonde_weights::<f64>(1).unwrap();
        assert!(matches!(
            extrapolate(&[t0.clone(), t1], &w),
            Err(RichardsonError::GridsNotNested(1))
        ));
        // wrong count
        assert!(matches!(
            extrapolate(std::slice::from_ref(&t0), &w),
            Err(RichardsonError::LevelCount { .. })
        ));
        // mismatched time grids
        let t2 = synthetic_trajectory(16, 4, |_, x| x);
        assert!(matches!(
            extrapolate(&[t0, t2], &w),
            Err(RichardsonError::TimeGridMismatch)
        ));
    }

    #[test]
    fn extrapolated_difference_basics() {
        let s = Stencil::coordinate(1);
        let t = synthetic_trajectory(16, 2, |i, x| x + i as f64);
        let h = t.grid().spacing();

        let id = extrapolated_difference(&t, &OffsetTuple::identity(), h).unwrap();
        assert_eq!(id, t);

        let flat = synthetic_trajectory(16, 2, |i, _| i as f64);
        let tuple = OffsetTuple::new(&s, &[&[1]]).unwrap();
        let z = extrapolated_difference(&flat, &tuple, h).unwrap();
        for i in 0..=2 {
            assert!(z.state(i).values().iter().all(|&v| v.abs() < 1e-12));
        }

        // linear-in-x trajectory: slope 1 away from the wrap seam
        let d = extrapolated_difference(&t, &tuple, h).unwrap();
        for i in 0..=2 {
            for v in &d.state(i).values()[..14] {
                assert!((v - 1.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn order_estimation_on_exact_power_laws() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let lin: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 0.7 * h)).collect();
        let fit = estimate_order(&lin).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-10);
        let cubic: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 3.0 * h * h * h)).collect();
        let fit = estimate_order(&cubic).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-10);
        assert!(fit.pair_orders.iter().all(|p| (p - 3.0).abs() < 1e-10));
    }

    #[test]
    fn order_estimation_tolerates_multiplicative_jitter() {
        // 5% multiplicative wobble over 4 dyadic levels stays within ±0.15
        let hs = [0.1f64, 0.05, 0.025, 0.0125];
        let jitter = [1.05f64, 0.96, 1.03, 0.95];
        for truth in [1.0f64, 2.0, 3.0] {
            let pairs: Vec<(f64, f64)> = hs
                .iter()
                .zip(&jitter)
                .map(|(&h, &j)| (h, j * h.powf(truth)))
                .collect();
            let fit = estimate_order(&pairs).unwrap();
            assert!(
                (fit.slope - truth).abs() <= 0.15,
                "truth {truth}: slope {}",
                fit.slope
            );
        }
    }

    #[test]
    fn order_estimation_rejects_bad_input() {
        assert!(matches!(
            estimate_order(&[(0.1, 1.0), (0.05, 0.5)]),
            Err(RichardsonError::TooFewPairs { .. })
        ));
        assert!(matches!(
            estimate_order(&[(0.1, 1.0), (0.05, 0.0), (0.025, 0.2)]),
            Err(RichardsonError::NonpositiveError(1))
        ));
        assert!(matches!(
            estimate_order(&[(0.1, 1.0), (0.1, 0.5), (0.025, 0.2)]),
            Err(RichardsonError::DuplicateMesh(1))
        ));
    }
}
