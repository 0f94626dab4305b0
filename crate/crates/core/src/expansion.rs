//! Correction operators and the time-discretized correction system used to
//! verify the mesh-size expansion of the space-time scheme numerically.
//!
//! The operator family `L^h` expands as `Σ_j (h^j / j!) 𝓛^{(j)}` where
//! `𝓛^{(j)}` is the `j`-th derivative of `L^h` in `h` at `h = 0`; the
//! coefficients of the double-difference part come out as
//! `A_{p,j} = (−1)^{p−j} / ((j+1)!(p−j+1)!)`, kept here as exact rationals.
//! The expansion terms `ν^{(p)}` solve a triangular system of implicit Euler
//! recursions forced by the corrections of lower order, starting from the
//! time-scheme solution `ν^{(0)}` and zero initial data.
//!
//! Note on the backward factor: the single-difference piece `𝔞^{0μ} δ_{−h,μ}`
//! differentiates to `(−1)^p (p+1)^{−1} 𝔞^{0μ} ∂_μ^{p+1}` — the alternating
//! sign is required for the remainder `L^h − Σ_{j≤p} (h^j/j!) 𝓛^{(j)}` to be
//! `O(h^{p+1})`, which the ratio tests below confirm.

use num_complex::Complex;
use num_rational::Ratio;
use thiserror::Error;

use crate::coeffs::{ContinuousCoefficients, DiscreteCoefficients};
use crate::grid::{GridError, GridFunction};
use crate::noise::NoisePath;
use crate::scalar::{cast, Scalar};
use crate::solver::{SolveError, Trajectory};
use crate::spectral::{
    continuous_l_symbol, continuous_m_symbol, dot_freq, ModeTrajectory, SpectralError,
    SpectralSpace,
};

/// Default cap on the correction-system order: the first two corrections are
/// what the expansion experiments need.
pub const MAX_CORRECTION_ORDER: usize = 2;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("A_{{p,j}} needs j ≤ p, got p = {p}, j = {j}")]
    CoefficientIndex { p: usize, j: usize },
    #[error("correction order {0} exceeds the configured maximum {MAX_CORRECTION_ORDER}")]
    OrderTooLarge(usize),
    #[error("factorials overflow the exact table beyond p = 16, got {0}")]
    CoefficientOverflow(usize),
    #[error("noise path does not match the correction system shape")]
    NoiseMismatch,
    #[error("base solution and coefficients disagree on shape")]
    ShapeMismatch,
    #[error("remainder needs {want} correction orders, got {got}")]
    NotEnoughOrders { got: usize, want: usize },
    #[error("fine grid is not a dyadic refinement of the reference grid")]
    NotNested,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] Box<SolveError>),
}

/// `A_{p,j} = (−1)^{p−j} / ((j+1)! (p−j+1)!)` as an exact rational.
pub fn coeff_a(p: usize, j: usize) -> Result<Ratio<i64>, ExpansionError> {
    if j > p {
        return Err(ExpansionError::CoefficientIndex { p, j });
    }
    if p > 16 {
        return Err(ExpansionError::CoefficientOverflow(p));
    }
    let fact = |n: usize| -> i64 { (2..=n as i64).product::<i64>().max(1) };
    let sign = if (p - j) % 2 == 0 { 1 } else { -1 };
    Ok(Ratio::new(sign, fact(j + 1) * fact(p - j + 1)))
}

/// Floating-point value of [`coeff_a`].
pub fn coeff_a_scalar<T: Scalar>(p: usize, j: usize) -> Result<T, ExpansionError> {
    let q = coeff_a(p, j)?;
    Ok(cast::<T>(*q.numer() as f64) / cast::<T>(*q.denom() as f64))
}

fn binomial(p: usize, l: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..l {
        acc = acc * (p - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// One correction operator order: the exact `A_{p,·}` row plus symbol
/// evaluation against constant-in-space discrete coefficients.
#[derive(Debug, Clone)]
pub struct CorrectionOperatorSpec {
    order: usize,
    a_row: Vec<Ratio<i64>>,
}

impl CorrectionOperatorSpec {
    pub fn new(order: usize) -> Result<Self, ExpansionError> {
        let a_row = (0..=order)
            .map(|j| coeff_a(order, j))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { order, a_row })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn a_row(&self) -> &[Ratio<i64>] {
        &self.a_row
    }

    /// Symbol of `𝓛^{(p)}` at one mode. For `p = 0` this is the symbol of
    /// `𝓛^{(0)} = Σ 𝔞^{λμ} ∂_λ ∂_μ` (zero offsets acting as the identity),
    /// which equals the continuous symbol under the consistency identities.
    pub fn l_symbol<T: Scalar>(
        &self,
        dc: &DiscreteCoefficients<T>,
        step: usize,
        freq: &[T],
    ) -> Result<Complex<T>, ExpansionError> {
        let s = dc.stencil().clone();
        let l = s.len();
        let p = self.order;
        let a_const = |li: usize, mi: usize| -> Result<T, ExpansionError> {
            dc.a_field(li, mi)
                .constant_in_x(step)
                .ok_or(ExpansionError::Spectral(
                    SpectralError::NonConstantCoefficients("𝔞"),
                ))
        };
        let i_dot = |offset: &[i64]| Complex::new(T::zero(), dot_freq(freq, offset));
        let mut acc = Complex::new(T::zero(), T::zero());
        if p == 0 {
            acc += Complex::new(a_const(0, 0)?, T::zero());
            for li in 1..l {
                let c_l0 = a_const(li, 0)?;
                let c_0l = a_const(0, li)?;
                acc += i_dot(s.offset(li)) * (c_l0 + c_0l);
                for mi in 1..l {
                    acc += i_dot(s.offset(li)) * i_dot(s.offset(mi)) * a_const(li, mi)?;
                }
            }
            return Ok(acc);
        }
        let p_fact = cast::<T>((2..=p as i64).product::<i64>().max(1) as f64);
        let inv_p1 = T::one() / cast::<T>((p + 1) as f64);
        let back_sign = if p % 2 == 0 { T::one() } else { -T::one() };
        for li in 1..l {
            let dl = i_dot(s.offset(li));
            // Λ₀ × Λ₀ double-difference block
            for mi in 1..l {
                let coeff = a_const(li, mi)?;
                if coeff == T::zero() {
                    continue;
                }
                let dm = i_dot(s.offset(mi));
                let mut inner = Complex::new(T::zero(), T::zero());
                for (j, q) in self.a_row.iter().enumerate() {
                    let w = cast::<T>(*q.numer() as f64) / cast::<T>(*q.denom() as f64);
                    inner += dl.powu(j as u32 + 1) * dm.powu((p - j) as u32 + 1) * w;
                }
                acc += inner * (p_fact * coeff);
            }
            // forward and backward single-difference blocks
            let c_l0 = a_const(li, 0)?;
            if c_l0 != T::zero() {
                acc += dl.powu(p as u32 + 1) * (inv_p1 * c_l0);
            }
            let c_0l = a_const(0, li)?;
            if c_0l != T::zero() {
                acc += dl.powu(p as u32 + 1) * (inv_p1 * c_0l * back_sign);
            }
        }
        Ok(acc)
    }

    /// Symbol of `𝓜^{(p)ρ} = (p+1)^{−1} Σ_{λ∈Λ₀} 𝔟^{λρ} ∂_λ^{p+1}`; for
    /// `p = 0` the zero offset contributes `𝔟^{0ρ}` as the identity.
    pub fn m_symbol<T: Scalar>(
        &self,
        dc: &DiscreteCoefficients<T>,
        step: usize,
        rho: usize,
        freq: &[T],
    ) -> Result<Complex<T>, ExpansionError> {
        let s = dc.stencil().clone();
        let p = self.order;
        let b_const = |li: usize| -> Result<T, ExpansionError> {
            dc.b_field(li, rho)
                .constant_in_x(step)
                .ok_or(ExpansionError::Spectral(
                    SpectralError::NonConstantCoefficients("𝔟"),
                ))
        };
        let mut acc = Complex::new(T::zero(), T::zero());
        if p == 0 {
            acc += Complex::new(b_const(0)?, T::zero());
        }
        let inv_p1 = T::one() / cast::<T>((p + 1) as f64);
        for li in 1..s.len() {
            let coeff = b_const(li)?;
            if coeff == T::zero() {
                continue;
            }
            let d = Complex::new(T::zero(), dot_freq(freq, s.offset(li)));
            acc += d.powu(p as u32 + 1) * (inv_p1 * coeff);
        }
        Ok(acc)
    }
}

/// Applies `𝓛^{(p)}` spectrally to a grid function (constant-in-space
/// coefficients only).
pub fn apply_correction_l<T: Scalar>(
    p: usize,
    dc: &DiscreteCoefficients<T>,
    step: usize,
    phi: &GridFunction<T>,
) -> Result<GridFunction<T>, ExpansionError> {
    let spec = CorrectionOperatorSpec::new(p)?;
    let space = SpectralSpace::new(phi.grid().clone());
    let mut modes = space.forward(phi)?;
    for (m, v) in modes.iter_mut().enumerate() {
        *v *= spec.l_symbol(dc, step, space.freq(m))?;
    }
    Ok(space.inverse_real(&modes)?)
}

/// Applies `𝓜^{(p)ρ}` spectrally to a grid function.
pub fn apply_correction_m<T: Scalar>(
    p: usize,
    dc: &DiscreteCoefficients<T>,
    step: usize,
    rho: usize,
    phi: &GridFunction<T>,
) -> Result<GridFunction<T>, ExpansionError> {
    let spec = CorrectionOperatorSpec::new(p)?;
    let space = SpectralSpace::new(phi.grid().clone());
    let mut modes = space.forward(phi)?;
    for (m, v) in modes.iter_mut().enumerate() {
        *v *= spec.m_symbol(dc, step, rho, space.freq(m))?;
    }
    Ok(space.inverse_real(&modes)?)
}

/// The expansion terms `ν^{(1)}, ..., ν^{(k)}` in spectral form.
#[derive(Debug, Clone)]
pub struct CorrectionSolution<T: Scalar> {
    orders: Vec<ModeTrajectory<T>>,
}

impl<T: Scalar> CorrectionSolution<T> {
    pub fn order_count(&self) -> usize {
        self.orders.len()
    }

    /// `ν^{(p)}` for `p ∈ 1..=k`.
    pub fn term(&self, p: usize) -> &ModeTrajectory<T> {
        &self.orders[p - 1]
    }

    pub fn to_trajectories(
        &self,
        space: &SpectralSpace<T>,
    ) -> Result<Vec<Trajectory<T>>, ExpansionError> {
        self.orders
            .iter()
            .map(|m| m.to_trajectory(space).map_err(Into::into))
            .collect()
    }
}

/// Solves the correction system for `p = 1..=k` sequentially: per mode,
///
/// `(1 − τ σ_𝓛) ν̂^{(p)}_i = ν̂^{(p)}_{i−1} + τ Σ_{l=1}^{p} C_p^l σ_{𝓛^{(l)}} ν̂^{(p−l)}_i
///   + Σ_ρ ξ^ρ_i [σ_𝓜ρ ν̂^{(p)}_{i−1} + Σ_{l=1}^{p} C_p^l σ_{𝓜^{(l)ρ}} ν̂^{(p−l)}_{i−1}]`
///
/// with zero initial data. The lower-order terms at the current step are
/// already known when order `p` is processed, so only the `𝓛 ν^{(p)}_i`
/// term is implicit; `σ_𝓛` is evaluated at `t_i`, the noise-side symbols at
/// `t_{i−1}`.
pub fn solve_correction_system<T: Scalar>(
    k: usize,
    c: &ContinuousCoefficients<T>,
    dc: &DiscreteCoefficients<T>,
    noise: &NoisePath<T>,
    nu0: &ModeTrajectory<T>,
) -> Result<CorrectionSolution<T>, ExpansionError> {
    if k > MAX_CORRECTION_ORDER {
        return Err(ExpansionError::OrderTooLarge(k));
    }
    let tg = *nu0.time_grid();
    let n = tg.steps();
    if noise.steps() != n || noise.noise_dim() != c.noise_dim() {
        return Err(ExpansionError::NoiseMismatch);
    }
    if dc.noise_dim() != c.noise_dim() || dc.n_steps() != n {
        return Err(ExpansionError::ShapeMismatch);
    }
    let grid = nu0.grid().clone();
    let space = SpectralSpace::new(grid.clone());
    let total = grid.point_count();
    let tau = tg.tau();
    let d1 = c.noise_dim();
    let zero = Complex::new(T::zero(), T::zero());

    let specs: Vec<CorrectionOperatorSpec> = (0..=k)
        .map(CorrectionOperatorSpec::new)
        .collect::<Result<_, _>>()?;

    let mut orders: Vec<ModeTrajectory<T>> = Vec::with_capacity(k);
    for p in 1..=k {
        let mut frames = vec![vec![zero; total]];
        for i in 1..=n {
            let t_now = tg.time_at(i);
            let t_prev = tg.time_at(i - 1);
            let prev = &frames[i - 1];
            let mut next = vec![zero; total];
            for m in 0..total {
                let freq = space.freq(m);
                let mut rhs = prev[m];
                // deterministic forcing from lower orders at the current step
                for l in 1..=p {
                    let lower_i = if l == p {
                        nu0.frame(i)[m]
                    } else {
                        orders[p - l - 1].frame(i)[m]
                    };
                    let sym = specs[l].l_symbol(dc, i, freq)?;
                    rhs += sym * lower_i * (tau * cast::<T>(binomial(p, l)));
                }
                // noise coupling at the previous step
                for rho in 0..d1 {
                    let xi = noise.xi(rho, i);
                    if xi == T::zero() {
                        continue;
                    }
                    let mut noise_term = continuous_m_symbol(c, t_prev, rho, freq)? * prev[m];
                    for l in 1..=p {
                        let lower_prev = if l == p {
                            nu0.frame(i - 1)[m]
                        } else {
                            orders[p - l - 1].frame(i - 1)[m]
                        };
                        let sym = specs[l].m_symbol(dc, i - 1, rho, freq)?;
                        noise_term += sym * lower_prev * cast::<T>(binomial(p, l));
                    }
                    rhs += noise_term * xi;
                }
                let denom =
                    Complex::new(T::one(), T::zero()) - continuous_l_symbol(c, t_now, freq)? * tau;
                next[m] = rhs / denom;
            }
            frames.push(next);
        }
        orders.push(ModeTrajectory::new(grid.clone(), tg, frames)?);
    }
    Ok(CorrectionSolution { orders })
}

/// The measured expansion remainder
/// `r^{τ,h}_i = v^h_i − ν^{(0)}_i − Σ_{j=1}^{k} (h^j / j!) ν^{(j)}_i`
/// on the reference grid (the scheme solution is restricted if finer).
pub fn remainder<T: Scalar>(
    vh: &Trajectory<T>,
    nu0: &Trajectory<T>,
    corr: &CorrectionSolution<T>,
    h: T,
    k: usize,
) -> Result<Trajectory<T>, ExpansionError> {
    if corr.order_count() < k {
        return Err(ExpansionError::NotEnoughOrders {
            got: corr.order_count(),
            want: k,
        });
    }
    let space = SpectralSpace::new(nu0.grid().clone());
    let mut terms = Vec::with_capacity(k);
    for p in 1..=k {
        terms.push(corr.term(p).to_trajectory(&space)?);
    }
    remainder_parts(vh, nu0, &terms, h, k)
}

/// Remainder against already-materialized correction trajectories.
pub fn remainder_parts<T: Scalar>(
    vh: &Trajectory<T>,
    nu0: &Trajectory<T>,
    corrections: &[Trajectory<T>],
    h: T,
    k: usize,
) -> Result<Trajectory<T>, ExpansionError> {
    if corrections.len() < k {
        return Err(ExpansionError::NotEnoughOrders {
            got: corrections.len(),
            want: k,
        });
    }
    if vh.time_grid() != nu0.time_grid() {
        return Err(ExpansionError::ShapeMismatch);
    }
    let fine = vh.grid().points_per_axis();
    let coarse = nu0.grid().points_per_axis();
    let ratio = fine[0] / coarse[0].max(1);
    if !ratio.is_power_of_two()
        || fine
            .iter()
            .zip(coarse)
            .any(|(&f, &c)| c == 0 || f != c * ratio)
    {
        return Err(ExpansionError::NotNested);
    }
    let j = ratio.trailing_zeros() as usize;
    let restricted = vh
        .restrict_to_coarser(j)
        .map_err(|e| ExpansionError::Solve(Box::new(e)))?;

    let n = nu0.time_grid().steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut fact = T::one();
    let mut weights = Vec::with_capacity(k);
    for p in 1..=k {
        fact *= cast::<T>(p as f64);
        weights.push(h.powi(p as i32) / fact);
    }
    for i in 0..=n {
        let mut r = restricted.state(i).sub(nu0.state(i))?;
        for (p, w) in weights.iter().enumerate() {
            r.axpy(-*w, corrections[p].state(i))?;
        }
        states.push(r);
    }
    Trajectory::new(states, *nu0.time_grid()).map_err(|e| ExpansionError::Solve(Box::new(e)))
}

/// Measured Taylor remainder of a single or double difference against the
/// spectral derivatives, plus the closed-form bound where the expansion
/// gives one.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorRemainder<T: Scalar> {
    /// grid `ℓ²` norm of the remainder
    pub measured: T,
    /// `|h|^{p+1} / (p+2)! · ‖∂_λ^{p+2} φ‖` for the single difference
    pub bound: Option<T>,
    /// `measured / |h|^{p+1}`
    pub constant: T,
}

/// Single difference: `δ_{h,λ} φ − Σ_{j=0}^{p} h^j/(j+1)! ∂_λ^{j+1} φ`;
/// double (`μ` given): `δ_{h,λ} δ_{−h,μ} φ − Σ_{i=0}^{p} h^i Σ_j A_{i,j}
/// ∂_λ^{j+1} ∂_μ^{i−j+1} φ`. Derivatives are spectral, so `φ` should be
/// band-limited on its grid.
pub fn taylor_remainder_check<T: Scalar>(
    phi: &GridFunction<T>,
    lambda: &[i64],
    mu: Option<&[i64]>,
    h_signed: T,
    p: usize,
) -> Result<TaylorRemainder<T>, ExpansionError> {
    let space = SpectralSpace::new(phi.grid().clone());
    let h_abs = h_signed.abs();
    match mu {
        None => {
            let mut lhs = phi.diff(lambda, h_signed)?;
            let mut fact = T::one(); // (j+1)! running
            for j in 0..=p {
                fact *= cast::<T>((j + 1) as f64);
                let term = space.directional_derivative(phi, lambda, j as u32 + 1)?;
                lhs.axpy(-h_signed.powi(j as i32) / fact, &term)?;
            }
            let measured = lhs.l2_grid_norm();
            fact *= cast::<T>((p + 2) as f64); // (p+2)!
            let deriv = space
                .directional_derivative(phi, lambda, p as u32 + 2)?
                .l2_grid_norm();
            let bound = h_abs.powi(p as i32 + 1) / fact * deriv;
            Ok(TaylorRemainder {
                measured,
                bound: Some(bound),
                constant: measured / h_abs.powi(p as i32 + 1),
            })
        }
        Some(mu) => {
            let mut lhs = phi.diff(mu, -h_signed)?.diff(lambda, h_signed)?;
            for i in 0..=p {
                for j in 0..=i {
                    let a: T = coeff_a_scalar(i, j)?;
                    let dl = space.directional_derivative(phi, lambda, j as u32 + 1)?;
                    let term = space.directional_derivative(&dl, mu, (i - j) as u32 + 1)?;
                    lhs.axpy(-h_signed.powi(i as i32) * a, &term)?;
                }
            }
            let measured = lhs.l2_grid_norm();
            Ok(TaylorRemainder {
                measured,
                bound: None,
                constant: measured / h_abs.powi(p as i32 + 1),
            })
        }
    }
}
