//! The implicit space-time stepper: difference operators `L^h`, `M^{h,ρ}`
//! built from discrete coefficients, one implicit Euler step per time index,
//! and whole-trajectory solves.
//!
//! Each step solves `(I − τ L^h_i) v_i = v_{i−1} + τ f_i + Σ_ρ (M^{h,ρ}_{i−1}
//! v_{i−1} + g^ρ_{i−1}) ξ^ρ_i`, matrix-free. The linear solve route is either
//! a nonsymmetric Krylov iteration (BiCGStab) or, in one dimension, a dense
//! LU factorization that is cached while the operator does not change
//! between steps.

use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::coeffs::{CoeffError, ContinuousCoefficients, DiscreteCoefficients, SampledField};
use crate::grid::{GridError, GridFunction, TorusGrid};
use crate::linalg::{bicgstab, norm2, DenseLu, LinalgError};
use crate::noise::{NoiseError, NoisePath, TimeGrid};
use crate::scalar::{cast, Scalar};
use crate::stencil::Stencil;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("noise path shape ({d1}, {n}) does not match the problem ({want_d1}, {want_n})")]
    NoiseShape {
        d1: usize,
        n: usize,
        want_d1: usize,
        want_n: usize,
    },
    #[error("time index {0} out of range 1..={1}")]
    StepOutOfRange(usize, usize),
    #[error("the direct solve route is only implemented for d = 1")]
    DirectNeedsOneDimension,
    #[error("linear-solve tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("iteration cap must be positive")]
    ZeroIterationCap,
    #[error("forcing table has {got} entries, expected {want}")]
    ForcingShape { got: usize, want: usize },
    #[error("linear solve failed at step {step}: {source}")]
    LinearSolve {
        step: usize,
        #[source]
        source: LinalgError,
    },
    #[error(
        "accepted step {step} violates the residual contract: relative residual {got:e} > {want:e}"
    )]
    ResidualContract { step: usize, got: f64, want: f64 },
    #[error("trajectory must hold {want} states, got {got}")]
    TrajectoryLength { got: usize, want: usize },
    #[error("trajectory file has wrong magic bytes")]
    BadMagic,
    #[error("trajectory serialization needs equal side lengths on all axes")]
    NonuniformSideLengths,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Linear solve route for the implicit step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Matrix-free BiCGStab, any dimension.
    IterativeNonsymmetric,
    /// Dense LU on the step operator, one dimension only; the factorization
    /// is cached while coefficients are time-invariant.
    DirectBanded1d,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearSolveConfig<T: Scalar> {
    /// Relative residual target for the implicit solve.
    pub rel_tol: T,
    /// Iteration cap; defaults to `10 ×` point count.
    pub max_iters: Option<usize>,
    pub method: SolveMethod,
}

impl<T: Scalar> Default for LinearSolveConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: cast(1e-12),
            max_iters: None,
            method: SolveMethod::IterativeNonsymmetric,
        }
    }
}

impl<T: Scalar> LinearSolveConfig<T> {
    pub fn direct_1d() -> Self {
        Self {
            method: SolveMethod::DirectBanded1d,
            ..Self::default()
        }
    }
}

/// Everything one scheme run needs: grid, stencil and coefficients, free
/// terms, initial state and the time grid.
#[derive(Debug, Clone)]
pub struct SchemeProblem<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    dc: DiscreteCoefficients<T>,
    f: SampledField<T>,
    g: Vec<SampledField<T>>,
    v0: GridFunction<T>,
    tg: TimeGrid<T>,
}

impl<T: Scalar> SchemeProblem<T> {
    pub fn new(
        grid: Arc<TorusGrid<T>>,
        dc: DiscreteCoefficients<T>,
        f: SampledField<T>,
        g: Vec<SampledField<T>>,
        v0: GridFunction<T>,
        tg: TimeGrid<T>,
    ) -> Result<Self, SolveError> {
        if **v0.grid() != *grid {
            return Err(SolveError::Grid(GridError::GridMismatch));
        }
        if let Some(cg) = dc.grid() {
            if **cg != *grid {
                return Err(SolveError::Grid(GridError::GridMismatch));
            }
        }
        if g.len() != dc.noise_dim() {
            return Err(SolveError::ForcingShape {
                got: g.len(),
                want: dc.noise_dim(),
            });
        }
        for field in std::iter::once(&f).chain(g.iter()) {
            if let SampledField::PerStep(gs) = field {
                if gs.len() != tg.steps() + 1 {
                    return Err(SolveError::ForcingShape {
                        got: gs.len(),
                        want: tg.steps() + 1,
                    });
                }
            }
            if let SampledField::TimeSeries(vs) = field {
                if vs.len() != tg.steps() + 1 {
                    return Err(SolveError::ForcingShape {
                        got: vs.len(),
                        want: tg.steps() + 1,
                    });
                }
            }
        }
        Ok(Self {
            grid,
            dc,
            f,
            g,
            v0,
            tg,
        })
    }

    /// Assembles a problem from continuous data: the initial state and free
    /// terms are sampled from `c`, the coefficients are taken as given.
    pub fn from_continuous(
        c: &ContinuousCoefficients<T>,
        dc: DiscreteCoefficients<T>,
        grid: Arc<TorusGrid<T>>,
        tg: TimeGrid<T>,
    ) -> Result<Self, SolveError> {
        let v0 = GridFunction::sample(grid.clone(), |x| c.u0(x));
        let f = sample_forcing(c.f_field().clone(), &grid, &tg);
        let g = (0..c.noise_dim())
            .map(|rho| sample_forcing(c.g_field(rho).clone(), &grid, &tg))
            .collect();
        Self::new(grid, dc, f, g, v0, tg)
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn stencil(&self) -> &Arc<Stencil> {
        self.dc.stencil()
    }

    pub fn coefficients(&self) -> &DiscreteCoefficients<T> {
        &self.dc
    }

    pub fn time_grid(&self) -> &TimeGrid<T> {
        &self.tg
    }

    pub fn noise_dim(&self) -> usize {
        self.dc.noise_dim()
    }

    pub fn initial_state(&self) -> &GridFunction<T> {
        &self.v0
    }

    pub fn f_at(&self, step: usize, flat: usize) -> T {
        self.f.value(step, flat)
    }

    pub fn g_at(&self, rho: usize, step: usize, flat: usize) -> T {
        self.g[rho].value(step, flat)
    }

    pub fn f_field(&self) -> &SampledField<T> {
        &self.f
    }

    pub fn g_fields(&self) -> &[SampledField<T>] {
        &self.g
    }

    /// `L^h_i φ = Σ_{λ,μ} 𝔞^{λμ}_i δ_{h,λ} δ_{−h,μ} φ`, pointwise.
    pub fn apply_lh(
        &self,
        step: usize,
        phi: &GridFunction<T>,
    ) -> Result<GridFunction<T>, SolveError> {
        if **phi.grid() != *self.grid {
            return Err(SolveError::Grid(GridError::GridMismatch));
        }
        let h = self.grid.spacing();
        let s = self.dc.stencil().clone();
        let mut out = GridFunction::zeros(self.grid.clone());
        for li in 0..s.len() {
            for mi in 0..s.len() {
                let field = self.dc.a_field(li, mi);
                if field.is_const_zero() {
                    continue;
                }
                let inner = phi.diff(s.offset(mi), -h)?;
                let both = inner.diff(s.offset(li), h)?;
                accumulate(&mut out, field, step, &both);
            }
        }
        Ok(out)
    }

    /// `M^{h,ρ}_i φ = Σ_λ 𝔟^{λρ}_i δ_{h,λ} φ`, pointwise.
    pub fn apply_mh(
        &self,
        step: usize,
        rho: usize,
        phi: &GridFunction<T>,
    ) -> Result<GridFunction<T>, SolveError> {
        if **phi.grid() != *self.grid {
            return Err(SolveError::Grid(GridError::GridMismatch));
        }
        let h = self.grid.spacing();
        let s = self.dc.stencil().clone();
        let mut out = GridFunction::zeros(self.grid.clone());
        for li in 0..s.len() {
            let field = self.dc.b_field(li, rho);
            if field.is_const_zero() {
                continue;
            }
            let d = phi.diff(s.offset(li), h)?;
            accumulate(&mut out, field, step, &d);
        }
        Ok(out)
    }

    /// Crude upper bound on `‖τ L^h‖`: each difference factor contributes at
    /// most `2/h` in operator norm.
    pub fn tau_operator_bound(&self) -> T {
        let h = self.grid.spacing();
        let two_over_h = cast::<T>(2.0) / h;
        let s = self.dc.stencil();
        let mut bound = T::zero();
        for li in 0..s.len() {
            for mi in 0..s.len() {
                let field = self.dc.a_field(li, mi);
                if field.is_const_zero() {
                    continue;
                }
                let sup = field_sup(field);
                let mut factor = T::one();
                if li != 0 {
                    factor *= two_over_h;
                }
                if mi != 0 {
                    factor *= two_over_h;
                }
                bound += sup * factor;
            }
        }
        self.tg.tau() * bound
    }

    /// A warning when the cheap bound cannot rule out `‖τ L^h‖ ≥ 1`, the
    /// sufficient condition behind unconditional solvability of the implicit
    /// step. The step is still attempted; the solve itself reports failure
    /// if the system is genuinely bad.
    pub fn tau_warning(&self) -> Option<String> {
        let bound = self.tau_operator_bound();
        if bound >= T::one() {
            Some(format!(
                "crude bound τ·‖L^h‖ ≤ {bound} is not below 1; the implicit operator is used anyway and each solve is residual-checked"
            ))
        } else {
            None
        }
    }
}

fn sample_forcing<T: Scalar>(
    field: crate::coeffs::ScalarField<T>,
    grid: &Arc<TorusGrid<T>>,
    tg: &TimeGrid<T>,
) -> SampledField<T> {
    use crate::coeffs::FieldKind;
    match field.kind() {
        FieldKind::Constant => {
            SampledField::Constant(field.eval(T::zero(), &vec![T::zero(); grid.dim()]))
        }
        FieldKind::TimeOnly => SampledField::TimeSeries(
            (0..=tg.steps())
                .map(|i| field.eval(tg.time_at(i), &vec![T::zero(); grid.dim()]))
                .collect(),
        ),
        FieldKind::SpaceOnly => SampledField::Steady(GridFunction::sample(grid.clone(), |x| {
            field.eval(T::zero(), x)
        })),
        FieldKind::General => SampledField::PerStep(
            (0..=tg.steps())
                .map(|i| {
                    let t = tg.time_at(i);
                    GridFunction::sample(grid.clone(), |x| field.eval(t, x))
                })
                .collect(),
        ),
    }
}

fn accumulate<T: Scalar>(
    out: &mut GridFunction<T>,
    field: &SampledField<T>,
    step: usize,
    term: &GridFunction<T>,
) {
    match field.constant_in_x(step) {
        Some(c) => {
            out.axpy(c, term).expect("same grid");
        }
        None => {
            let values = out.values_mut();
            for (flat, v) in term.values().iter().enumerate() {
                values[flat] += field.value(step, flat) * *v;
            }
        }
    }
}

fn field_sup<T: Scalar>(field: &SampledField<T>) -> T {
    match field {
        SampledField::Constant(c) => c.abs(),
        SampledField::TimeSeries(v) => v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs())),
        SampledField::Steady(g) => g.sup_grid_norm(),
        SampledField::PerStep(gs) => gs
            .iter()
            .fold(T::zero(), |acc, g| acc.max(g.sup_grid_norm())),
    }
}

/// The time-indexed sequence `(v_i)_{i=0..n}` produced by a scheme run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    states: Vec<GridFunction<T>>,
    tg: TimeGrid<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(states: Vec<GridFunction<T>>, tg: TimeGrid<T>) -> Result<Self, SolveError> {
        if states.len() != tg.steps() + 1 {
            return Err(SolveError::TrajectoryLength {
                got: states.len(),
                want: tg.steps() + 1,
            });
        }
        for s in &states {
            s.check_finite()?;
            if s.grid() != states[0].grid() {
                return Err(SolveError::Grid(GridError::GridMismatch));
            }
        }
        Ok(Self { states, tg })
    }

    pub fn states(&self) -> &[GridFunction<T>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &GridFunction<T> {
        &self.states[i]
    }

    pub fn time_grid(&self) -> &TimeGrid<T> {
        &self.tg
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        self.states[0].grid()
    }

    /// Restriction onto the grid coarsened by `2^j`, step by step.
    pub fn restrict_to_coarser(&self, j: usize) -> Result<Self, SolveError> {
        let states = self
            .states
            .iter()
            .map(|s| s.restrict_to_coarser(j))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            states,
            tg: self.tg,
        })
    }

    /// `max_i sup_x |v_i(x)|`.
    pub fn max_sup_norm(&self) -> T {
        self.states
            .iter()
            .fold(T::zero(), |acc, s| acc.max(s.sup_grid_norm()))
    }

    /// `max_i |v_i|_{ℓ²(G_h)}`.
    pub fn max_l2_norm(&self) -> T {
        self.states
            .iter()
            .fold(T::zero(), |acc, s| acc.max(s.l2_grid_norm()))
    }

    /// `max_i sup_x |self_i(x) − other_i(x)|`.
    pub fn max_sup_distance(&self, other: &Self) -> Result<T, SolveError> {
        self.max_distance(other, |d| d.sup_grid_norm())
    }

    /// `max_i |self_i − other_i|_{ℓ²(G_h)}`.
    pub fn max_l2_distance(&self, other: &Self) -> Result<T, SolveError> {
        self.max_distance(other, |d| d.l2_grid_norm())
    }

    fn max_distance(
        &self,
        other: &Self,
        norm: impl Fn(&GridFunction<T>) -> T,
    ) -> Result<T, SolveError> {
        if self.states.len() != other.states.len() {
            return Err(SolveError::TrajectoryLength {
                got: other.states.len(),
                want: self.states.len(),
            });
        }
        let mut worst = T::zero();
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max(norm(&a.sub(b)?));
        }
        Ok(worst)
    }
}

const TRAJ_MAGIC: &[u8; 8] = b"SPDETRAJ";

/// Writes a trajectory: header (`"SPDETRAJ"`, `u32` d, `u32` per-axis counts,
/// `u32` n, `f64` τ, `f64` L, little-endian) followed by `n + 1` frames of
/// `f64` values in row-major order. Requires equal side lengths per axis.
pub fn write_trajectory<T: Scalar>(
    traj: &Trajectory<T>,
    mut w: impl Write,
) -> Result<(), SolveError> {
    let grid = traj.grid();
    let l0 = grid.side_lengths()[0];
    if grid.side_lengths().iter().any(|&l| l != l0) {
        return Err(SolveError::NonuniformSideLengths);
    }
    let io = |e: std::io::Error| SolveError::Noise(NoiseError::Io(e));
    w.write_all(TRAJ_MAGIC).map_err(io)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())
        .map_err(io)?;
    for &n in grid.points_per_axis() {
        w.write_all(&(n as u32).to_le_bytes()).map_err(io)?;
    }
    w.write_all(&(traj.tg.steps() as u32).to_le_bytes())
        .map_err(io)?;
    let tau = traj.tg.tau().to_f64().unwrap_or(f64::NAN);
    w.write_all(&tau.to_le_bytes()).map_err(io)?;
    let l = l0.to_f64().unwrap_or(f64::NAN);
    w.write_all(&l.to_le_bytes()).map_err(io)?;
    for state in traj.states() {
        for v in state.values() {
            w.write_all(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())
                .map_err(io)?;
        }
    }
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory`].
pub fn read_trajectory<T: Scalar>(mut r: impl Read) -> Result<Trajectory<T>, SolveError> {
    let io = |e: std::io::Error| SolveError::Noise(NoiseError::Io(e));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != TRAJ_MAGIC {
        return Err(SolveError::BadMagic);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    let mut counts = Vec::with_capacity(d);
    for _ in 0..d {
        r.read_exact(&mut u32buf).map_err(io)?;
        counts.push(u32::from_le_bytes(u32buf) as usize);
    }
    r.read_exact(&mut u32buf).map_err(io)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf).map_err(io)?;
    let tau = f64::from_le_bytes(f64buf);
    r.read_exact(&mut f64buf).map_err(io)?;
    let l = f64::from_le_bytes(f64buf);
    let grid = TorusGrid::new(vec![cast::<T>(l); d], counts)?;
    let tg = TimeGrid::new(cast::<T>(tau * n as f64), n)?;
    let mut states = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let mut values = Vec::with_capacity(grid.point_count());
        for _ in 0..grid.point_count() {
            r.read_exact(&mut f64buf).map_err(io)?;
            values.push(cast::<T>(f64::from_le_bytes(f64buf)));
        }
        states.push(GridFunction::from_values(grid.clone(), values)?);
    }
    Trajectory::new(states, tg)
}

/// Reusable stepper: validates the configuration once and caches the direct
/// factorization across steps (and trajectories) while the operator is
/// time-invariant. Cloning shares the cached factorization, so one warmed-up
/// stepper can be fanned out to parallel workers cheaply.
#[derive(Clone)]
pub struct SchemeStepper<'p, T: Scalar> {
    problem: &'p SchemeProblem<T>,
    cfg: LinearSolveConfig<T>,
    lu: Option<(usize, Arc<DenseLu<T>>)>,
    tau_bound: T,
}

impl<'p, T: Scalar> SchemeStepper<'p, T> {
    pub fn new(
        problem: &'p SchemeProblem<T>,
        cfg: LinearSolveConfig<T>,
    ) -> Result<Self, SolveError> {
        if cfg.method == SolveMethod::DirectBanded1d && problem.grid().dim() != 1 {
            return Err(SolveError::DirectNeedsOneDimension);
        }
        if !(cfg.rel_tol > T::zero() && cfg.rel_tol < T::one()) {
            return Err(SolveError::BadTolerance(
                cfg.rel_tol.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if cfg.max_iters == Some(0) {
            return Err(SolveError::ZeroIterationCap);
        }
        let tau_bound = problem.tau_operator_bound();
        Ok(Self {
            problem,
            cfg,
            lu: None,
            tau_bound,
        })
    }

    pub fn problem(&self) -> &SchemeProblem<T> {
        self.problem
    }

    /// Builds the direct factorization eagerly when it is reusable across
    /// steps, so clones of this stepper share it.
    pub fn warm_up(&mut self) -> Result<(), SolveError> {
        if self.cfg.method == SolveMethod::DirectBanded1d
            && self.problem.coefficients().time_invariant()
            && self.lu.is_none()
        {
            let p = self.problem;
            let points = p.grid().point_count();
            let lu = DenseLu::from_operator(points, |col: &[T]| {
                let gf = GridFunction::from_values(p.grid().clone(), col.to_vec())
                    .expect("unit column is finite");
                self.apply_step_operator(1, &gf)
                    .expect("operator application on unit column")
                    .into_values()
            })
            .map_err(|source| SolveError::LinearSolve { step: 1, source })?;
            self.lu = Some((1, Arc::new(lu)));
        }
        Ok(())
    }

    fn apply_step_operator(
        &self,
        step: usize,
        v: &GridFunction<T>,
    ) -> Result<GridFunction<T>, SolveError> {
        let tau = self.problem.time_grid().tau();
        let lv = self.problem.apply_lh(step, v)?;
        v.zip_map(&lv, |vi, li| vi - tau * li).map_err(Into::into)
    }

    /// Right-hand side of the implicit system at step `i`.
    fn right_hand_side(
        &self,
        v_prev: &GridFunction<T>,
        i: usize,
        noise: &NoisePath<T>,
    ) -> Result<GridFunction<T>, SolveError> {
        let p = self.problem;
        let tau = p.time_grid().tau();
        let mut rhs = v_prev.clone();
        {
            let values = rhs.values_mut();
            for flat in 0..values.len() {
                values[flat] += tau * p.f_at(i, flat);
            }
        }
        for rho in 0..p.noise_dim() {
            let xi = noise.xi(rho, i);
            if xi == T::zero() {
                continue;
            }
            let mv = p.apply_mh(i - 1, rho, v_prev)?;
            let values = rhs.values_mut();
            for (flat, m) in mv.values().iter().enumerate() {
                values[flat] += (*m + p.g_at(rho, i - 1, flat)) * xi;
            }
        }
        Ok(rhs)
    }

    /// One implicit Euler step: returns `v_i` and enforces the residual
    /// contract `‖(I − τL)v_i − rhs‖ ≤ rel_tol · ‖rhs‖` up to a
    /// backward-stability allowance of order `eps · (1 + τ‖L‖) · ‖v_i‖`,
    /// below which no floating-point solve can place the true residual.
    pub fn step(
        &mut self,
        v_prev: &GridFunction<T>,
        i: usize,
        noise: &NoisePath<T>,
    ) -> Result<GridFunction<T>, SolveError> {
        let p = self.problem;
        let n = p.time_grid().steps();
        if i == 0 || i > n {
            return Err(SolveError::StepOutOfRange(i, n));
        }
        let rhs = self.right_hand_side(v_prev, i, noise)?;
        let points = p.grid().point_count();
        let max_iters = self.cfg.max_iters.unwrap_or(10 * points);

        let rhs_norm = norm2(rhs.values());
        let tol_part = if rhs_norm == T::zero() {
            self.cfg.rel_tol
        } else {
            self.cfg.rel_tol * rhs_norm
        };
        let floor_scale = cast::<T>(64.0) * T::epsilon() * (T::one() + self.tau_bound);
        let target_for = |x_norm: T| tol_part + floor_scale * x_norm.max(rhs_norm);
        let tau = p.time_grid().tau();
        let apply_op = |x: &GridFunction<T>| -> Result<GridFunction<T>, SolveError> {
            let lv = p.apply_lh(i, x)?;
            x.zip_map(&lv, |vi, li| vi - tau * li).map_err(Into::into)
        };
        let residual_norm = |x: &GridFunction<T>| -> Result<T, SolveError> {
            let ax = apply_op(x)?;
            let mut acc = T::zero();
            for (b, a) in rhs.values().iter().zip(ax.values()) {
                let d = *b - *a;
                acc += d * d;
            }
            Ok(acc.sqrt())
        };

        let v = match self.cfg.method {
            SolveMethod::DirectBanded1d => {
                let reusable = p.coefficients().time_invariant();
                let rebuild = match &self.lu {
                    Some((cached_step, _)) => !reusable && *cached_step != i,
                    None => true,
                };
                if rebuild {
                    let lu = DenseLu::from_operator(points, |col: &[T]| {
                        let gf = GridFunction::from_values(p.grid().clone(), col.to_vec())
                            .expect("unit column is finite");
                        apply_op(&gf)
                            .expect("operator application on unit column")
                            .into_values()
                    })
                    .map_err(|source| SolveError::LinearSolve { step: i, source })?;
                    self.lu = Some((i, Arc::new(lu)));
                }
                let lu = &self.lu.as_ref().expect("factorization present").1;
                let x = lu
                    .solve(rhs.values())
                    .map_err(|source| SolveError::LinearSolve { step: i, source })?;
                let mut xg = GridFunction::from_values(p.grid().clone(), x)?;
                // iterative refinement drives the residual down to the
                // round-off floor even when τ‖L‖ is large
                for _ in 0..2 {
                    if residual_norm(&xg)? <= target_for(norm2(xg.values())) {
                        break;
                    }
                    let ax = apply_op(&xg)?;
                    let r: Vec<T> = rhs
                        .values()
                        .iter()
                        .zip(ax.values())
                        .map(|(&b, &a)| b - a)
                        .collect();
                    let dx = lu
                        .solve(&r)
                        .map_err(|source| SolveError::LinearSolve { step: i, source })?;
                    for (xv, d) in xg.values_mut().iter_mut().zip(&dx) {
                        *xv += *d;
                    }
                }
                xg
            }
            SolveMethod::IterativeNonsymmetric => {
                let apply = |col: &[T]| {
                    let gf = GridFunction::from_values(p.grid().clone(), col.to_vec())
                        .expect("iterate is finite");
                    apply_op(&gf)
                        .expect("operator application on iterate")
                        .into_values()
                };
                let eff_tol = if rhs_norm > T::zero() {
                    target_for(norm2(v_prev.values())) / rhs_norm
                } else {
                    self.cfg.rel_tol
                };
                let mut xg = v_prev.clone();
                // the recursive residual inside BiCGStab can drift from the
                // true one at round-off level; restart until the true
                // residual meets the contract
                for _attempt in 0..3 {
                    let (x, _stats) =
                        bicgstab(&apply, rhs.values(), xg.values(), eff_tol, max_iters)
                            .map_err(|source| SolveError::LinearSolve { step: i, source })?;
                    xg = GridFunction::from_values(p.grid().clone(), x)?;
                    if residual_norm(&xg)? <= target_for(norm2(xg.values())) {
                        break;
                    }
                }
                xg
            }
        };

        // verify the contract with the true residual
        let res_norm = residual_norm(&v)?;
        let target = target_for(norm2(v.values()));
        if res_norm > target {
            return Err(SolveError::ResidualContract {
                step: i,
                got: res_norm.to_f64().unwrap_or(f64::NAN),
                want: target.to_f64().unwrap_or(f64::NAN),
            });
        }
        v.check_finite()?;
        Ok(v)
    }

    /// Runs the full recursion from the initial state.
    pub fn solve_trajectory(&mut self, noise: &NoisePath<T>) -> Result<Trajectory<T>, SolveError> {
        let p = self.problem;
        check_noise_shape(p, noise)?;
        let n = p.time_grid().steps();
        let mut states = Vec::with_capacity(n + 1);
        states.push(p.initial_state().clone());
        for i in 1..=n {
            let next = self.step(&states[i - 1], i, noise)?;
            states.push(next);
        }
        Trajectory::new(states, *p.time_grid())
    }

    /// Streaming variant for memory-constrained runs: visits each state once
    /// (including the initial one) without storing the trajectory.
    pub fn solve_visit(
        &mut self,
        noise: &NoisePath<T>,
        mut visit: impl FnMut(usize, &GridFunction<T>),
    ) -> Result<(), SolveError> {
        let p = self.problem;
        check_noise_shape(p, noise)?;
        let n = p.time_grid().steps();
        let mut current = p.initial_state().clone();
        visit(0, &current);
        for i in 1..=n {
            current = self.step(&current, i, noise)?;
            visit(i, &current);
        }
        Ok(())
    }
}

fn check_noise_shape<T: Scalar>(
    p: &SchemeProblem<T>,
    noise: &NoisePath<T>,
) -> Result<(), SolveError> {
    if noise.noise_dim() != p.noise_dim() || noise.steps() != p.time_grid().steps() {
        return Err(SolveError::NoiseShape {
            d1: noise.noise_dim(),
            n: noise.steps(),
            want_d1: p.noise_dim(),
            want_n: p.time_grid().steps(),
        });
    }
    Ok(())
}

/// One-shot implicit step without a reusable stepper.
pub fn implicit_step<T: Scalar>(
    v_prev: &GridFunction<T>,
    i: usize,
    noise: &NoisePath<T>,
    problem: &SchemeProblem<T>,
    cfg: LinearSolveConfig<T>,
) -> Result<GridFunction<T>, SolveError> {
    SchemeStepper::new(problem, cfg)?.step(v_prev, i, noise)
}

/// Solves the whole trajectory with a fresh stepper.
pub fn solve_trajectory<T: Scalar>(
    problem: &SchemeProblem<T>,
    noise: &NoisePath<T>,
    cfg: LinearSolveConfig<T>,
) -> Result<Trajectory<T>, SolveError> {
    SchemeStepper::new(problem, cfg)?.solve_trajectory(noise)
}

/// Relative residual of the scheme equation at step `i` for a candidate
/// `(v_prev, v_i)` pair; used by the contract tests.
pub fn scheme_residual<T: Scalar>(
    problem: &SchemeProblem<T>,
    i: usize,
    v_prev: &GridFunction<T>,
    v_i: &GridFunction<T>,
    noise: &NoisePath<T>,
) -> Result<T, SolveError> {
    let stepper = SchemeStepper::new(problem, LinearSolveConfig::default())?;
    let rhs = stepper.right_hand_side(v_prev, i, noise)?;
    let av = stepper.apply_step_operator(i, v_i)?;
    let res: Vec<T> = rhs
        .values()
        .iter()
        .zip(av.values())
        .map(|(&b, &a)| b - a)
        .collect();
    let rhs_norm = norm2(rhs.values());
    let res_norm = norm2(&res);
    Ok(if rhs_norm == T::zero() {
        res_norm
    } else {
        res_norm / rhs_norm
    })
}
