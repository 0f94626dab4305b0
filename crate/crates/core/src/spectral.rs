//! Fourier-side machinery on the torus: transforms, operator symbols, and
//! exact per-mode solvers for constant-in-space coefficients.
//!
//! Two solvers live here. `solve_discrete_spectral` diagonalizes the implicit
//! space-time scheme itself (difference-operator symbols) and serves as an
//! independent oracle for the physical-space stepper. `solve_time_scheme`
//! runs the implicit Euler recursion with the *differential* operator symbols;
//! its solution is the reference the extrapolated schemes converge to.
//!
//! Conventions: `φ(x_j) = Σ_m φ̂_m e^{i m̃ · x_j}` with `m̃_a = 2π s(m_a) / L_a`
//! and `s(m) = m` for `m ≤ n/2`, `m − n` otherwise. For data supported on
//! modes strictly inside the Nyquist band the per-mode recursions are exact
//! up to round-off.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::coeffs::{ContinuousCoefficients, DiscreteCoefficients, SampledField};
use crate::grid::{GridError, GridFunction, TorusGrid};
use crate::noise::{NoisePath, TimeGrid};
use crate::scalar::{cast, cast_usize, Scalar};
use crate::solver::{SolveError, Trajectory};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("{0} must be constant in space for the spectral route")]
    NonConstantCoefficients(&'static str),
    #[error("mode data lives on a different grid")]
    GridMismatch,
    #[error("mode trajectory must hold {want} frames, got {got}")]
    FrameCount { got: usize, want: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] Box<SolveError>),
}

/// FFT plans and mode frequencies for one grid.
pub struct SpectralSpace<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    forward_plans: Vec<Arc<dyn Fft<T>>>,
    inverse_plans: Vec<Arc<dyn Fft<T>>>,
    /// flattened per-mode angular frequencies, `dim` entries per mode
    freqs: Vec<T>,
}

impl<T: Scalar> SpectralSpace<T> {
    pub fn new(grid: Arc<TorusGrid<T>>) -> Self {
        let mut planner = FftPlanner::new();
        let forward_plans = grid
            .points_per_axis()
            .iter()
            .map(|&n| planner.plan_fft_forward(n))
            .collect();
        let inverse_plans = grid
            .points_per_axis()
            .iter()
            .map(|&n| planner.plan_fft_inverse(n))
            .collect();

        let d = grid.dim();
        let total = grid.point_count();
        let mut freqs = vec![T::zero(); total * d];
        let two_pi = cast::<T>(2.0) * T::PI();
        for flat in 0..total {
            let mut rem = flat;
            for a in 0..d {
                let idx = rem / grid.strides()[a];
                rem %= grid.strides()[a];
                let n = grid.points_per_axis()[a];
                let signed = if idx <= n / 2 {
                    idx as i64
                } else {
                    idx as i64 - n as i64
                };
                freqs[flat * d + a] = two_pi * cast::<T>(signed as f64) / grid.side_lengths()[a];
            }
        }
        Self {
            grid,
            forward_plans,
            inverse_plans,
            freqs,
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    /// Angular frequency vector `m̃` of a flat mode index.
    pub fn freq(&self, flat_mode: usize) -> &[T] {
        let d = self.grid.dim();
        &self.freqs[flat_mode * d..(flat_mode + 1) * d]
    }

    fn fft_axes(&self, data: &mut [Complex<T>], inverse: bool) {
        let d = self.grid.dim();
        for a in 0..d {
            let n = self.grid.points_per_axis()[a];
            if n == 1 {
                continue;
            }
            let stride = self.grid.strides()[a];
            let block = n * stride;
            let plan = if inverse {
                &self.inverse_plans[a]
            } else {
                &self.forward_plans[a]
            };
            let mut line = vec![Complex::new(T::zero(), T::zero()); n];
            let total = data.len();
            let mut block_start = 0;
            while block_start < total {
                for inner in 0..stride {
                    let base = block_start + inner;
                    for k in 0..n {
                        line[k] = data[base + k * stride];
                    }
                    plan.process(&mut line);
                    for k in 0..n {
                        data[base + k * stride] = line[k];
                    }
                }
                block_start += block;
            }
        }
    }

    /// Forward transform, normalized so that mode amplitudes are Fourier
    /// coefficients (`forward(const c)[0] = c`).
    pub fn forward(&self, f: &GridFunction<T>) -> Result<Vec<Complex<T>>, SpectralError> {
        if f.grid() != &self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut data: Vec<Complex<T>> = f
            .values()
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        self.fft_axes(&mut data, false);
        let scale = T::one() / cast_usize::<T>(self.grid.point_count());
        for v in &mut data {
            *v *= scale;
        }
        Ok(data)
    }

    /// Inverse transform onto the grid, discarding the residual imaginary
    /// part (conjugate symmetry of real data keeps it at round-off).
    pub fn inverse_real(&self, modes: &[Complex<T>]) -> Result<GridFunction<T>, SpectralError> {
        if modes.len() != self.grid.point_count() {
            return Err(SpectralError::GridMismatch);
        }
        let mut data = modes.to_vec();
        self.fft_axes(&mut data, true);
        let values = data.into_iter().map(|c| c.re).collect();
        GridFunction::from_values(self.grid.clone(), values).map_err(Into::into)
    }

    /// Directional spectral derivative `∂_λ^order φ` with multiplier
    /// `(i m̃·λ)^order`; exact for band-limited φ.
    pub fn directional_derivative(
        &self,
        f: &GridFunction<T>,
        direction: &[i64],
        order: u32,
    ) -> Result<GridFunction<T>, SpectralError> {
        let mut modes = self.forward(f)?;
        for (flat, v) in modes.iter_mut().enumerate() {
            let dot = dot_freq(self.freq(flat), direction);
            let factor = Complex::new(T::zero(), dot).powu(order);
            *v *= factor;
        }
        self.inverse_real(&modes)
    }
}

pub(crate) fn dot_freq<T: Scalar>(freq: &[T], direction: &[i64]) -> T {
    freq.iter()
        .zip(direction)
        .fold(T::zero(), |acc, (&w, &l)| acc + w * cast::<T>(l as f64))
}

/// Symbol of `δ_{h,λ}`: `(e^{i h (m̃·λ)} − 1) / h`, identity for `λ = 0`.
pub fn delta_symbol<T: Scalar>(freq: &[T], offset: &[i64], h_signed: T) -> Complex<T> {
    if offset.iter().all(|&o| o == 0) {
        return Complex::new(T::one(), T::zero());
    }
    let theta = h_signed * dot_freq(freq, offset);
    let e = Complex::new(theta.cos(), theta.sin());
    (e - Complex::new(T::one(), T::zero())) / h_signed
}

fn constant_a<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    step: usize,
) -> Result<Vec<T>, SpectralError> {
    let l = dc.stencil().len();
    let mut out = Vec::with_capacity(l * l);
    for li in 0..l {
        for mi in 0..l {
            out.push(
                dc.a_field(li, mi)
                    .constant_in_x(step)
                    .ok_or(SpectralError::NonConstantCoefficients("𝔞"))?,
            );
        }
    }
    Ok(out)
}

fn constant_b<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    step: usize,
) -> Result<Vec<T>, SpectralError> {
    let l = dc.stencil().len();
    let d1 = dc.noise_dim();
    let mut out = Vec::with_capacity(l * d1);
    for li in 0..l {
        for rho in 0..d1 {
            out.push(
                dc.b_field(li, rho)
                    .constant_in_x(step)
                    .ok_or(SpectralError::NonConstantCoefficients("𝔟"))?,
            );
        }
    }
    Ok(out)
}

/// Symbol of `L^h_i` at one mode for constant-in-space coefficients.
pub fn discrete_l_symbol<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    step: usize,
    freq: &[T],
    h: T,
) -> Result<Complex<T>, SpectralError> {
    let a = constant_a(dc, step)?;
    Ok(discrete_l_symbol_from(&a, dc, freq, h))
}

fn discrete_l_symbol_from<T: Scalar>(
    a: &[T],
    dc: &DiscreteCoefficients<T>,
    freq: &[T],
    h: T,
) -> Complex<T> {
    let s = dc.stencil();
    let l = s.len();
    let mut acc = Complex::new(T::zero(), T::zero());
    for li in 0..l {
        for mi in 0..l {
            let coeff = a[li * l + mi];
            if coeff == T::zero() {
                continue;
            }
            let sym = delta_symbol(freq, s.offset(li), h) * delta_symbol(freq, s.offset(mi), -h);
            acc += sym * coeff;
        }
    }
    acc
}

/// Symbol of `M^{h,ρ}_i` at one mode for constant-in-space coefficients.
pub fn discrete_m_symbol<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    step: usize,
    rho: usize,
    freq: &[T],
    h: T,
) -> Result<Complex<T>, SpectralError> {
    let b = constant_b(dc, step)?;
    Ok(discrete_m_symbol_from(&b, dc, rho, freq, h))
}

fn discrete_m_symbol_from<T: Scalar>(
    b: &[T],
    dc: &DiscreteCoefficients<T>,
    rho: usize,
    freq: &[T],
    h: T,
) -> Complex<T> {
    let s = dc.stencil();
    let d1 = dc.noise_dim();
    let mut acc = Complex::new(T::zero(), T::zero());
    for li in 0..s.len() {
        let coeff = b[li * d1 + rho];
        if coeff == T::zero() {
            continue;
        }
        acc += delta_symbol(freq, s.offset(li), h) * coeff;
    }
    acc
}

fn constant_in_x_value<T: Scalar>(
    field: &crate::coeffs::ScalarField<T>,
    t: T,
    what: &'static str,
) -> Result<T, SpectralError> {
    use crate::coeffs::FieldKind;
    match field.kind() {
        FieldKind::Constant | FieldKind::TimeOnly => Ok(field.eval(t, &[])),
        _ => Err(SpectralError::NonConstantCoefficients(what)),
    }
}

/// Symbol of the differential operator `𝓛(t) = a^{αβ}(t) D_α D_β`:
/// `a^{00} + i Σ_β (a^{0β} + a^{β0}) m̃_β − Σ_{α,β ≥ 1} a^{αβ} m̃_α m̃_β`.
pub fn continuous_l_symbol<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    t: T,
    freq: &[T],
) -> Result<Complex<T>, SpectralError> {
    let d = c.dim();
    let mut re = constant_in_x_value(c.a_field(0, 0), t, "a")?;
    let mut im = T::zero();
    for beta in 1..=d {
        let sum = constant_in_x_value(c.a_field(0, beta), t, "a")?
            + constant_in_x_value(c.a_field(beta, 0), t, "a")?;
        im += sum * freq[beta - 1];
    }
    for alpha in 1..=d {
        for beta in 1..=d {
            re -= constant_in_x_value(c.a_field(alpha, beta), t, "a")?
                * freq[alpha - 1]
                * freq[beta - 1];
        }
    }
    Ok(Complex::new(re, im))
}

/// Symbol of `𝓜^ρ(t) = b^{αρ}(t) D_α`: `b^{0ρ} + i Σ_α b^{αρ} m̃_α`.
pub fn continuous_m_symbol<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    t: T,
    rho: usize,
    freq: &[T],
) -> Result<Complex<T>, SpectralError> {
    let d = c.dim();
    let re = constant_in_x_value(c.b_field(0, rho), t, "b")?;
    let mut im = T::zero();
    for alpha in 1..=d {
        im += constant_in_x_value(c.b_field(alpha, rho), t, "b")? * freq[alpha - 1];
    }
    Ok(Complex::new(re, im))
}

/// A trajectory kept as per-step Fourier mode amplitudes.
#[derive(Debug, Clone)]
pub struct ModeTrajectory<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    tg: TimeGrid<T>,
    frames: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> ModeTrajectory<T> {
    pub fn new(
        grid: Arc<TorusGrid<T>>,
        tg: TimeGrid<T>,
        frames: Vec<Vec<Complex<T>>>,
    ) -> Result<Self, SpectralError> {
        if frames.len() != tg.steps() + 1 {
            return Err(SpectralError::FrameCount {
                got: frames.len(),
                want: tg.steps() + 1,
            });
        }
        for f in &frames {
            if f.len() != grid.point_count() {
                return Err(SpectralError::GridMismatch);
            }
        }
        Ok(Self { grid, tg, frames })
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid<T> {
        &self.tg
    }

    pub fn frame(&self, i: usize) -> &[Complex<T>] {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Vec<Complex<T>>] {
        &self.frames
    }

    pub fn to_trajectory(&self, space: &SpectralSpace<T>) -> Result<Trajectory<T>, SpectralError> {
        if space.grid() != &self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let states = self
            .frames
            .iter()
            .map(|f| space.inverse_real(f))
            .collect::<Result<Vec<_>, _>>()?;
        Trajectory::new(states, self.tg).map_err(|e| SpectralError::Solve(Box::new(e)))
    }
}

/// Fourier modes of one forcing field at one step, with cheap fast paths for
/// spatially constant data.
fn forcing_modes<T: Scalar>(
    field: &SampledField<T>,
    space: &SpectralSpace<T>,
    step: usize,
    steady_cache: &mut Option<Vec<Complex<T>>>,
) -> Result<Vec<Complex<T>>, SpectralError> {
    let total = space.grid().point_count();
    let zero = Complex::new(T::zero(), T::zero());
    Ok(match field {
        SampledField::Constant(c) => {
            let mut m = vec![zero; total];
            m[0] = Complex::new(*c, T::zero());
            m
        }
        SampledField::TimeSeries(v) => {
            let mut m = vec![zero; total];
            m[0] = Complex::new(v[step], T::zero());
            m
        }
        SampledField::Steady(g) => {
            if steady_cache.is_none() {
                *steady_cache = Some(space.forward(g)?);
            }
            steady_cache.clone().expect("cache populated")
        }
        SampledField::PerStep(gs) => space.forward(&gs[step])?,
    })
}

/// Exact Fourier diagonalization of the implicit space-time scheme for
/// constant-in-space coefficients: per mode,
/// `v̂_i = [v̂_{i−1} + τ f̂_i + Σ_ρ (σ_M^ρ v̂_{i−1} + ĝ^ρ) ξ^ρ_i] / (1 − τ σ_L)`.
pub fn solve_discrete_spectral_modes<T: Scalar>(
    problem: &crate::solver::SchemeProblem<T>,
    noise: &NoisePath<T>,
) -> Result<ModeTrajectory<T>, SpectralError> {
    let dc = problem.coefficients();
    if !dc.constant_in_x() {
        return Err(SpectralError::NonConstantCoefficients("𝔞/𝔟"));
    }
    let grid = problem.grid().clone();
    let tg = *problem.time_grid();
    let h = grid.spacing();
    let space = SpectralSpace::new(grid.clone());
    let total = grid.point_count();
    let tau = tg.tau();
    let d1 = problem.noise_dim();

    let mut frames = Vec::with_capacity(tg.steps() + 1);
    frames.push(space.forward(problem.initial_state())?);

    let mut f_steady = None;
    let mut g_steady: Vec<Option<Vec<Complex<T>>>> = vec![None; d1];

    for i in 1..=tg.steps() {
        let a_now = constant_a(dc, i)?;
        let b_prev = constant_b(dc, i - 1)?;
        let f_modes = forcing_modes(problem.f_field(), &space, i, &mut f_steady)?;
        let mut g_modes = Vec::with_capacity(d1);
        for rho in 0..d1 {
            g_modes.push(forcing_modes(
                &problem.g_fields()[rho],
                &space,
                i - 1,
                &mut g_steady[rho],
            )?);
        }
        let prev = frames.last().expect("nonempty").clone();
        let mut next = vec![Complex::new(T::zero(), T::zero()); total];
        for m in 0..total {
            let freq = space.freq(m);
            let mut rhs = prev[m] + f_modes[m] * tau;
            for rho in 0..d1 {
                let xi = noise.xi(rho, i);
                if xi == T::zero() {
                    continue;
                }
                let sym_m = discrete_m_symbol_from(&b_prev, dc, rho, freq, h);
                rhs += (sym_m * prev[m] + g_modes[rho][m]) * xi;
            }
            let sym_l = discrete_l_symbol_from(&a_now, dc, freq, h);
            let denom = Complex::new(T::one(), T::zero()) - sym_l * tau;
            next[m] = rhs / denom;
        }
        frames.push(next);
    }
    ModeTrajectory::new(grid, tg, frames)
}

/// Grid-space version of [`solve_discrete_spectral_modes`].
pub fn solve_discrete_spectral<T: Scalar>(
    problem: &crate::solver::SchemeProblem<T>,
    noise: &NoisePath<T>,
) -> Result<Trajectory<T>, SpectralError> {
    let modes = solve_discrete_spectral_modes(problem, noise)?;
    let space = SpectralSpace::new(modes.grid().clone());
    modes.to_trajectory(&space)
}

/// Implicit Euler recursion with the *continuous* operator symbols: realizes
/// the time-scheme solution exactly up to spectral truncation of the data.
/// `σ_𝓛` is evaluated at `t_i`, `σ_𝓜` and `g` at `t_{i−1}`.
pub fn solve_time_scheme_modes<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    grid: &Arc<TorusGrid<T>>,
    tg: &TimeGrid<T>,
    noise: &NoisePath<T>,
) -> Result<ModeTrajectory<T>, SpectralError> {
    if !c.coefficients_constant_in_x() {
        return Err(SpectralError::NonConstantCoefficients("a/b"));
    }
    let space = SpectralSpace::new(grid.clone());
    let total = grid.point_count();
    let tau = tg.tau();
    let d1 = c.noise_dim();

    let u0 = GridFunction::sample(grid.clone(), |x| c.u0(x));
    let mut frames = Vec::with_capacity(tg.steps() + 1);
    frames.push(space.forward(&u0)?);

    use crate::coeffs::FieldKind;
    let data_modes =
        |field: &crate::coeffs::ScalarField<T>, t: T| -> Result<Vec<Complex<T>>, SpectralError> {
            match field.kind() {
                FieldKind::Constant | FieldKind::TimeOnly => {
                    let mut m = vec![Complex::new(T::zero(), T::zero()); total];
                    m[0] = Complex::new(field.eval(t, &vec![T::zero(); grid.dim()]), T::zero());
                    Ok(m)
                }
                _ => space.forward(&GridFunction::sample(grid.clone(), |x| field.eval(t, x))),
            }
        };

    for i in 1..=tg.steps() {
        let t_now = tg.time_at(i);
        let t_prev = tg.time_at(i - 1);
        let f_modes = data_modes(c.f_field(), t_now)?;
        let mut g_modes = Vec::with_capacity(d1);
        for rho in 0..d1 {
            g_modes.push(data_modes(c.g_field(rho), t_prev)?);
        }
        let prev = frames.last().expect("nonempty").clone();
        let mut next = vec![Complex::new(T::zero(), T::zero()); total];
        for m in 0..total {
            let freq = space.freq(m);
            let mut rhs = prev[m] + f_modes[m] * tau;
            for rho in 0..d1 {
                let xi = noise.xi(rho, i);
                if xi == T::zero() {
                    continue;
                }
                let sym_m = continuous_m_symbol(c, t_prev, rho, freq)?;
                rhs += (sym_m * prev[m] + g_modes[rho][m]) * xi;
            }
            let sym_l = continuous_l_symbol(c, t_now, freq)?;
            let denom = Complex::new(T::one(), T::zero()) - sym_l * tau;
            next[m] = rhs / denom;
        }
        frames.push(next);
    }
    ModeTrajectory::new(grid.clone(), *tg, frames)
}

/// Grid-space version of [`solve_time_scheme_modes`].
pub fn solve_time_scheme_spectral<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    grid: &Arc<TorusGrid<T>>,
    tg: &TimeGrid<T>,
    noise: &NoisePath<T>,
) -> Result<Trajectory<T>, SpectralError> {
    let modes = solve_time_scheme_modes(c, grid, tg, noise)?;
    let space = SpectralSpace::new(grid.clone());
    modes.to_trajectory(&space)
}
