//! Continuous and discrete coefficient fields, the consistency mapping
//! between them, and the stochastic-parabolicity validators.
//!
//! Continuous coefficients describe the differential operators
//! `𝓛 = a^{αβ} D_α D_β` and `𝓜^ρ = b^{αρ} D_α` with indices running over
//! `{0, ..., d}` and `D_0` the identity, so the zero-index entries carry the
//! lower-order terms. Discrete coefficients weight products of forward and
//! backward differences over stencil offset pairs.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::Expr;
use crate::grid::{GridError, GridFunction, TorusGrid};
use crate::linalg::{symmetric_eigenvalues, LinalgError};
use crate::noise::TimeGrid;
use crate::scalar::{cast, Scalar};
use crate::stencil::Stencil;

#[derive(Debug, Error, PartialEq)]
pub enum CoeffError {
    #[error("sample list for a validator must be nonempty")]
    NoSamples,
    #[error("index out of range: {0}")]
    IndexOutOfRange(&'static str),
    #[error("table length mismatch for {0}")]
    TableShape(&'static str),
    #[error("grid-sampled field supplied without a grid")]
    MissingGrid,
    #[error("per-step table has {got} entries, expected {want}")]
    StepCountMismatch { got: usize, want: usize },
    #[error("built-in consistency construction needs the coordinate stencil {{0, e_1, ..., e_d}}")]
    UnsupportedStencil,
    #[error(
        "built-in consistency construction needs diagonal diffusion, a^{{{0},{1}}} is nonzero"
    )]
    NonDiagonalDiffusion(usize, usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A deterministic scalar field of `(t, x)`: a constant, a parsed closed-form
/// expression, or an opaque function.
#[derive(Clone)]
pub enum ScalarField<T: Scalar> {
    Constant(T),
    Expr(Expr),
    Func(Arc<dyn Fn(T, &[T]) -> T + Send + Sync>),
}

/// Dependence pattern of a field, as far as it can be determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Constant,
    TimeOnly,
    SpaceOnly,
    General,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zero() -> Self {
        ScalarField::Constant(T::zero())
    }

    pub fn eval(&self, t: T, x: &[T]) -> T {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Expr(e) => e.eval(t, x),
            ScalarField::Func(f) => f(t, x),
        }
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            ScalarField::Constant(_) => FieldKind::Constant,
            ScalarField::Expr(e) => match (e.uses_time(), e.uses_space()) {
                (false, false) => FieldKind::Constant,
                (true, false) => FieldKind::TimeOnly,
                (false, true) => FieldKind::SpaceOnly,
                (true, true) => FieldKind::General,
            },
            // opaque: assume the worst
            ScalarField::Func(_) => FieldKind::General,
        }
    }

    /// The constant value when the field is verifiably constant.
    pub fn constant_value(&self, dim: usize) -> Option<T> {
        match self.kind() {
            FieldKind::Constant => Some(self.eval(T::zero(), &vec![T::zero(); dim])),
            _ => None,
        }
    }

    pub fn is_const_zero(&self, dim: usize) -> bool {
        self.constant_value(dim) == Some(T::zero())
    }
}

impl<T: Scalar> fmt::Debug for ScalarField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Expr(e) => write!(f, "Expr({e:?})"),
            ScalarField::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// Coefficients, free terms and initial data of the continuous problem.
///
/// The diffusion table is kept symmetric by construction: `set_a` writes both
/// `(α, β)` and `(β, α)`.
#[derive(Debug, Clone)]
pub struct ContinuousCoefficients<T: Scalar> {
    dim: usize,
    noise_dim: usize,
    a: Vec<ScalarField<T>>,
    b: Vec<ScalarField<T>>,
    f: ScalarField<T>,
    g: Vec<ScalarField<T>>,
    u0: ScalarField<T>,
}

impl<T: Scalar> ContinuousCoefficients<T> {
    /// All-zero problem of spatial dimension `dim` driven by `noise_dim`
    /// independent Wiener processes.
    pub fn new(dim: usize, noise_dim: usize) -> Self {
        let e = dim + 1;
        Self {
            dim,
            noise_dim,
            a: vec![ScalarField::zero(); e * e],
            b: vec![ScalarField::zero(); e * noise_dim],
            f: ScalarField::zero(),
            g: vec![ScalarField::zero(); noise_dim],
            u0: ScalarField::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn set_a(&mut self, alpha: usize, beta: usize, field: ScalarField<T>) -> &mut Self {
        let e = self.dim + 1;
        assert!(alpha < e && beta < e, "a index out of range");
        self.a[alpha * e + beta] = field.clone();
        self.a[beta * e + alpha] = field;
        self
    }

    pub fn set_b(&mut self, alpha: usize, rho: usize, field: ScalarField<T>) -> &mut Self {
        assert!(
            alpha < self.dim + 1 && rho < self.noise_dim,
            "b index out of range"
        );
        self.b[alpha * self.noise_dim + rho] = field;
        self
    }

    pub fn set_f(&mut self, field: ScalarField<T>) -> &mut Self {
        self.f = field;
        self
    }

    pub fn set_g(&mut self, rho: usize, field: ScalarField<T>) -> &mut Self {
        assert!(rho < self.noise_dim, "g index out of range");
        self.g[rho] = field;
        self
    }

    pub fn set_u0(&mut self, field: ScalarField<T>) -> &mut Self {
        self.u0 = field;
        self
    }

    pub fn a_field(&self, alpha: usize, beta: usize) -> &ScalarField<T> {
        &self.a[alpha * (self.dim + 1) + beta]
    }

    pub fn b_field(&self, alpha: usize, rho: usize) -> &ScalarField<T> {
        &self.b[alpha * self.noise_dim + rho]
    }

    pub fn f_field(&self) -> &ScalarField<T> {
        &self.f
    }

    pub fn g_field(&self, rho: usize) -> &ScalarField<T> {
        &self.g[rho]
    }

    pub fn u0_field(&self) -> &ScalarField<T> {
        &self.u0
    }

    pub fn a(&self, alpha: usize, beta: usize, t: T, x: &[T]) -> T {
        self.a_field(alpha, beta).eval(t, x)
    }

    pub fn b(&self, alpha: usize, rho: usize, t: T, x: &[T]) -> T {
        self.b_field(alpha, rho).eval(t, x)
    }

    pub fn f(&self, t: T, x: &[T]) -> T {
        self.f.eval(t, x)
    }

    pub fn g(&self, rho: usize, t: T, x: &[T]) -> T {
        self.g[rho].eval(t, x)
    }

    pub fn u0(&self, x: &[T]) -> T {
        self.u0.eval(T::zero(), x)
    }

    /// Whether every operator coefficient (not data) is verifiably
    /// independent of `x`.
    pub fn coefficients_constant_in_x(&self) -> bool {
        self.a
            .iter()
            .chain(self.b.iter())
            .all(|f| matches!(f.kind(), FieldKind::Constant | FieldKind::TimeOnly))
    }

    /// Largest |a| and |b| over the sample cloud, for the boundedness check.
    pub fn max_abs_at(&self, samples: &[(T, Vec<T>)]) -> (T, T) {
        let mut a_max = T::zero();
        let mut b_max = T::zero();
        for (t, x) in samples {
            for f in &self.a {
                a_max = a_max.max(f.eval(*t, x).abs());
            }
            for f in &self.b {
                b_max = b_max.max(f.eval(*t, x).abs());
            }
        }
        (a_max, b_max)
    }
}

/// Outcome of a parabolicity check: the margin is the smallest eigenvalue of
/// the coercivity form over the sample cloud; pass means `margin ≥ κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicityReport<T: Scalar> {
    pub pass: bool,
    pub margin: T,
    pub kappa: T,
}

/// Checks `Σ (2a^{αβ} − b^{αρ} b^{βρ}) z^α z^β ≥ κ |z|²` at the samples by an
/// eigenvalue test on the `d × d` matrix, for each `ρ` separately.
pub fn check_parabolicity_continuous<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    samples: &[(T, Vec<T>)],
    kappa: T,
) -> Result<ParabolicityReport<T>, CoeffError> {
    if samples.is_empty() {
        return Err(CoeffError::NoSamples);
    }
    let d = c.dim();
    let mut margin = T::infinity();
    for (t, x) in samples {
        for rho in 0..c.noise_dim().max(1) {
            let mut mat = vec![T::zero(); d * d];
            for alpha in 1..=d {
                for beta in 1..=d {
                    let two = cast::<T>(2.0);
                    let mut v = two * c.a(alpha, beta, *t, x);
                    if rho < c.noise_dim() {
                        v -= c.b(alpha, rho, *t, x) * c.b(beta, rho, *t, x);
                    }
                    mat[(alpha - 1) * d + (beta - 1)] = v;
                }
            }
            let eig = symmetric_eigenvalues(&mat, d)?;
            margin = margin.min(eig[0]);
        }
    }
    Ok(ParabolicityReport {
        pass: margin >= kappa,
        margin,
        kappa,
    })
}

/// A coefficient field sampled for the discrete scheme, stored in the
/// cheapest representation implied by its dependence pattern.
#[derive(Debug, Clone)]
pub enum SampledField<T: Scalar> {
    Constant(T),
    /// Constant in space, one value per time index `0..=n`.
    TimeSeries(Vec<T>),
    /// Constant in time.
    Steady(GridFunction<T>),
    /// One grid function per time index `0..=n`.
    PerStep(Vec<GridFunction<T>>),
}

impl<T: Scalar> SampledField<T> {
    pub fn zero() -> Self {
        SampledField::Constant(T::zero())
    }

    #[inline]
    pub fn value(&self, step: usize, flat: usize) -> T {
        match self {
            SampledField::Constant(c) => *c,
            SampledField::TimeSeries(v) => v[step],
            SampledField::Steady(g) => g.values()[flat],
            SampledField::PerStep(gs) => gs[step].values()[flat],
        }
    }

    /// The spatially constant value at a step, when representable.
    pub fn constant_in_x(&self, step: usize) -> Option<T> {
        match self {
            SampledField::Constant(c) => Some(*c),
            SampledField::TimeSeries(v) => Some(v[step]),
            _ => None,
        }
    }

    pub fn is_const_zero(&self) -> bool {
        matches!(self, SampledField::Constant(c) if *c == T::zero())
    }

    pub fn time_invariant(&self) -> bool {
        matches!(self, SampledField::Constant(_) | SampledField::Steady(_))
    }

    fn uses_grid(&self) -> bool {
        matches!(self, SampledField::Steady(_) | SampledField::PerStep(_))
    }
}

/// Averages two sampled fields, promoting to the wider representation.
fn average_fields<T: Scalar>(
    a: &SampledField<T>,
    b: &SampledField<T>,
    grid: Option<&Arc<TorusGrid<T>>>,
    n_steps: usize,
) -> Result<SampledField<T>, CoeffError> {
    use SampledField::*;
    let half = cast::<T>(0.5);
    Ok(match (a, b) {
        (Constant(x), Constant(y)) => Constant((*x + *y) * half),
        (Constant(x), TimeSeries(v)) | (TimeSeries(v), Constant(x)) => {
            TimeSeries(v.iter().map(|&y| (*x + y) * half).collect())
        }
        (TimeSeries(u), TimeSeries(v)) => {
            TimeSeries(u.iter().zip(v).map(|(&x, &y)| (x + y) * half).collect())
        }
        (Constant(x), Steady(g)) | (Steady(g), Constant(x)) => {
            Steady(g.zip_map(g, |v, _| (*x + v) * half)?)
        }
        (Steady(g1), Steady(g2)) => Steady(g1.zip_map(g2, |x, y| (x + y) * half)?),
        // remaining combinations materialize per step
        (lhs, rhs) => {
            let grid = grid.ok_or(CoeffError::MissingGrid)?;
            let mut out = Vec::with_capacity(n_steps + 1);
            for step in 0..=n_steps {
                let mut values = Vec::with_capacity(grid.point_count());
                for flat in 0..grid.point_count() {
                    values.push((lhs.value(step, flat) + rhs.value(step, flat)) * half);
                }
                out.push(GridFunction::from_values(grid.clone(), values)?);
            }
            PerStep(out)
        }
    })
}

/// Discrete coefficient tables `𝔞^{λμ}_i(x)` and `𝔟^{λρ}_i(x)` over the
/// stencil offsets, time indices `0..=n` and grid points.
///
/// Construction always stores the symmetric part of the `𝔞` table, so
/// `𝔞^{λμ} = 𝔞^{μλ}` holds exactly.
#[derive(Debug, Clone)]
pub struct DiscreteCoefficients<T: Scalar> {
    stencil: Arc<Stencil>,
    grid: Option<Arc<TorusGrid<T>>>,
    n_steps: usize,
    noise_dim: usize,
    a: Vec<SampledField<T>>,
    b: Vec<SampledField<T>>,
}

impl<T: Scalar> DiscreteCoefficients<T> {
    /// `a` is row-major `|Λ| × |Λ|`, `b` row-major `|Λ| × d₁`.
    pub fn new(
        stencil: Arc<Stencil>,
        grid: Option<Arc<TorusGrid<T>>>,
        n_steps: usize,
        noise_dim: usize,
        a: Vec<SampledField<T>>,
        b: Vec<SampledField<T>>,
    ) -> Result<Self, CoeffError> {
        let l = stencil.len();
        if a.len() != l * l {
            return Err(CoeffError::TableShape("a"));
        }
        if b.len() != l * noise_dim {
            return Err(CoeffError::TableShape("b"));
        }
        for field in a.iter().chain(b.iter()) {
            if field.uses_grid() && grid.is_none() {
                return Err(CoeffError::MissingGrid);
            }
            if let SampledField::TimeSeries(v) = field {
                if v.len() != n_steps + 1 {
                    return Err(CoeffError::StepCountMismatch {
                        got: v.len(),
                        want: n_steps + 1,
                    });
                }
            }
            if let SampledField::PerStep(gs) = field {
                if gs.len() != n_steps + 1 {
                    return Err(CoeffError::StepCountMismatch {
                        got: gs.len(),
                        want: n_steps + 1,
                    });
                }
            }
        }
        // store the symmetric part of a
        let mut sym = a.clone();
        for li in 0..l {
            for mi in (li + 1)..l {
                let avg = average_fields(&a[li * l + mi], &a[mi * l + li], grid.as_ref(), n_steps)?;
                sym[li * l + mi] = avg.clone();
                sym[mi * l + li] = avg;
            }
        }
        Ok(Self {
            stencil,
            grid,
            n_steps,
            noise_dim,
            a: sym,
            b,
        })
    }

    pub fn stencil(&self) -> &Arc<Stencil> {
        &self.stencil
    }

    pub fn grid(&self) -> Option<&Arc<TorusGrid<T>>> {
        self.grid.as_ref()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn a_field(&self, li: usize, mi: usize) -> &SampledField<T> {
        &self.a[li * self.stencil.len() + mi]
    }

    pub fn b_field(&self, li: usize, rho: usize) -> &SampledField<T> {
        &self.b[li * self.noise_dim + rho]
    }

    #[inline]
    pub fn a_value(&self, li: usize, mi: usize, step: usize, flat: usize) -> T {
        self.a_field(li, mi).value(step, flat)
    }

    #[inline]
    pub fn b_value(&self, li: usize, rho: usize, step: usize, flat: usize) -> T {
        self.b_field(li, rho).value(step, flat)
    }

    /// Whether the implicit operator is the same at every step.
    pub fn time_invariant(&self) -> bool {
        self.a.iter().all(|f| f.time_invariant())
    }

    /// Whether every coefficient is constant in space (the spectral routes
    /// require this).
    pub fn constant_in_x(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|f| !f.uses_grid())
    }

    /// A crude upper bound for the operator norm factor `Σ |𝔞| · 4 / h²`
    /// used by the time-step warning; `None` when coefficients are sampled
    /// and no grid is attached.
    pub fn max_abs_a(&self) -> T {
        let mut worst = T::zero();
        for field in &self.a {
            let m = match field {
                SampledField::Constant(c) => c.abs(),
                SampledField::TimeSeries(v) => v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs())),
                SampledField::Steady(g) => g.sup_grid_norm(),
                SampledField::PerStep(gs) => gs
                    .iter()
                    .fold(T::zero(), |acc, g| acc.max(g.sup_grid_norm())),
            };
            worst = worst.max(m);
        }
        worst
    }

    /// Largest |𝔞| and |𝔟| over sampled (step, point) pairs.
    pub fn max_abs_at(&self, samples: &[(usize, usize)]) -> (T, T) {
        let mut a_max = T::zero();
        let mut b_max = T::zero();
        for &(step, flat) in samples {
            for f in &self.a {
                a_max = a_max.max(f.value(step, flat).abs());
            }
            for f in &self.b {
                b_max = b_max.max(f.value(step, flat).abs());
            }
        }
        (a_max, b_max)
    }

    /// Returns a copy with `δ` added to every diagonal `𝔞^{λλ}`, `λ ∈ Λ₀`;
    /// used by the parabolicity monotonicity tests.
    pub fn with_diagonal_shift(&self, delta: T) -> Self {
        let mut out = self.clone();
        let l = self.stencil.len();
        for li in 1..l {
            let shifted = match &self.a[li * l + li] {
                SampledField::Constant(c) => SampledField::Constant(*c + delta),
                SampledField::TimeSeries(v) => {
                    SampledField::TimeSeries(v.iter().map(|&x| x + delta).collect())
                }
                SampledField::Steady(g) => {
                    SampledField::Steady(g.zip_map(g, |x, _| x + delta).expect("same grid"))
                }
                SampledField::PerStep(gs) => SampledField::PerStep(
                    gs.iter()
                        .map(|g| g.zip_map(g, |x, _| x + delta).expect("same grid"))
                        .collect(),
                ),
            };
            out.a[li * l + li] = shifted;
        }
        out
    }
}

/// Discrete parabolicity: eigenvalue test of the `|Λ₀| × |Λ₀|` form
/// `Σ (2𝔞^{λμ} − 𝔟^{λρ} 𝔟^{μρ}) z_λ z_μ ≥ κ Σ z_λ²` at sampled
/// (step, point) pairs, for each `ρ`.
pub fn check_parabolicity_discrete<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    samples: &[(usize, usize)],
    kappa: T,
) -> Result<ParabolicityReport<T>, CoeffError> {
    if samples.is_empty() {
        return Err(CoeffError::NoSamples);
    }
    let l0 = dc.stencil().len() - 1; // nonzero offsets
    let mut margin = T::infinity();
    let two = cast::<T>(2.0);
    for &(step, flat) in samples {
        for rho in 0..dc.noise_dim().max(1) {
            let mut mat = vec![T::zero(); l0 * l0];
            for li in 1..=l0 {
                for mi in 1..=l0 {
                    let mut v = two * dc.a_value(li, mi, step, flat);
                    if rho < dc.noise_dim() {
                        v -= dc.b_value(li, rho, step, flat) * dc.b_value(mi, rho, step, flat);
                    }
                    mat[(li - 1) * l0 + (mi - 1)] = v;
                }
            }
            let eig = symmetric_eigenvalues(&mat, l0)?;
            margin = margin.min(eig[0]);
        }
    }
    Ok(ParabolicityReport {
        pass: margin >= kappa,
        margin,
        kappa,
    })
}

/// Residuals of the five consistency identities at one `(t_i, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyResidual<T: Scalar> {
    /// `|𝔞^{00} − a^{00}|`
    pub zeroth_a: T,
    /// per `α`: `|Σ_{λ∈Λ₀} 𝔞^{λ0} λ^α + Σ_{μ∈Λ₀} 𝔞^{0μ} μ^α − (a^{α0} + a^{0α})|`
    pub first_order_a: Vec<T>,
    /// per `(α, β)` row-major: `|Σ_{λ,μ∈Λ₀} 𝔞^{λμ} λ^α μ^β − a^{αβ}|`
    pub second_order_a: Vec<T>,
    /// per `ρ`: `|𝔟^{0ρ} − b^{0ρ}|`
    pub zeroth_b: Vec<T>,
    /// per `(α, ρ)` row-major: `|Σ_{λ∈Λ₀} 𝔟^{λρ} λ^α − b^{αρ}|`
    pub first_order_b: Vec<T>,
}

impl<T: Scalar> ConsistencyResidual<T> {
    pub fn max(&self) -> T {
        let mut m = self.zeroth_a;
        for v in self
            .first_order_a
            .iter()
            .chain(&self.second_order_a)
            .chain(&self.zeroth_b)
            .chain(&self.first_order_b)
        {
            m = m.max(*v);
        }
        m
    }
}

/// Evaluates the five consistency identities at time index `step` and the
/// grid point with the given flat index.
pub fn consistency_residual<T: Scalar>(
    dc: &DiscreteCoefficients<T>,
    c: &ContinuousCoefficients<T>,
    grid: &TorusGrid<T>,
    tg: &TimeGrid<T>,
    step: usize,
    flat: usize,
) -> ConsistencyResidual<T> {
    let d = c.dim();
    let t = tg.time_at(step);
    let x = grid.coords_of(flat);
    let s = dc.stencil();
    let l = s.len();

    let zeroth_a = (dc.a_value(0, 0, step, flat) - c.a(0, 0, t, &x)).abs();

    let mut first_order_a = Vec::with_capacity(d);
    for alpha in 1..=d {
        let mut lhs = T::zero();
        for li in 1..l {
            let lam = s.offset(li);
            lhs += dc.a_value(li, 0, step, flat) * cast::<T>(lam[alpha - 1] as f64);
            lhs += dc.a_value(0, li, step, flat) * cast::<T>(lam[alpha - 1] as f64);
        }
        let rhs = c.a(alpha, 0, t, &x) + c.a(0, alpha, t, &x);
        first_order_a.push((lhs - rhs).abs());
    }

    let mut second_order_a = Vec::with_capacity(d * d);
    for alpha in 1..=d {
        for beta in 1..=d {
            let mut lhs = T::zero();
            for li in 1..l {
                for mi in 1..l {
                    let lam = cast::<T>(s.offset(li)[alpha - 1] as f64);
                    let mu = cast::<T>(s.offset(mi)[beta - 1] as f64);
                    lhs += dc.a_value(li, mi, step, flat) * lam * mu;
                }
            }
            second_order_a.push((lhs - c.a(alpha, beta, t, &x)).abs());
        }
    }

    let mut zeroth_b = Vec::with_capacity(c.noise_dim());
    let mut first_order_b = Vec::with_capacity(d * c.noise_dim());
    for rho in 0..c.noise_dim() {
        zeroth_b.push((dc.b_value(0, rho, step, flat) - c.b(0, rho, t, &x)).abs());
    }
    for alpha in 1..=d {
        for rho in 0..c.noise_dim() {
            let mut lhs = T::zero();
            for li in 1..l {
                lhs += dc.b_value(li, rho, step, flat) * cast::<T>(s.offset(li)[alpha - 1] as f64);
            }
            first_order_b.push((lhs - c.b(alpha, rho, t, &x)).abs());
        }
    }

    ConsistencyResidual {
        zeroth_a,
        first_order_a,
        second_order_a,
        zeroth_b,
        first_order_b,
    }
}

/// Samples a continuous field into the cheapest discrete representation.
fn sample_field<T: Scalar>(
    eval: &dyn Fn(T, &[T]) -> T,
    kind: FieldKind,
    grid: &Arc<TorusGrid<T>>,
    tg: &TimeGrid<T>,
) -> SampledField<T> {
    let zero_x = vec![T::zero(); grid.dim()];
    match kind {
        FieldKind::Constant => SampledField::Constant(eval(T::zero(), &zero_x)),
        FieldKind::TimeOnly => SampledField::TimeSeries(
            (0..=tg.steps())
                .map(|i| eval(tg.time_at(i), &zero_x))
                .collect(),
        ),
        FieldKind::SpaceOnly => {
            SampledField::Steady(GridFunction::sample(grid.clone(), |x| eval(T::zero(), x)))
        }
        FieldKind::General => SampledField::PerStep(
            (0..=tg.steps())
                .map(|i| {
                    let t = tg.time_at(i);
                    GridFunction::sample(grid.clone(), |x| eval(t, x))
                })
                .collect(),
        ),
    }
}

/// Probes a field at a handful of points to reject detectably nonzero input;
/// a sampling check, not a proof of vanishing.
fn probe_nonzero<T: Scalar>(field: &ScalarField<T>, dim: usize, horizon: T) -> bool {
    if let Some(v) = field.constant_value(dim) {
        return v != T::zero();
    }
    let mut x = vec![T::zero(); dim];
    for k in 0..32usize {
        let frac = cast::<T>((k as f64 + 0.5) / 32.0);
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = frac * cast::<T>(0.37 + 0.19 * a as f64);
        }
        if field.eval(horizon * frac, &x) != T::zero() {
            return true;
        }
    }
    false
}

/// Builds discrete coefficients satisfying the consistency identities from
/// continuous ones, for the coordinate stencil and diagonal diffusion:
/// `𝔞^{e_j e_j} = a^{jj}`, the pair `(𝔞^{e_j 0}, 𝔞^{0 e_j})` shares
/// `a^{j0} + a^{0j}` (stored symmetrically), `𝔞^{00} = a^{00}`,
/// `𝔟^{e_j ρ} = b^{jρ}`, `𝔟^{0ρ} = b^{0ρ}`.
pub fn build_discrete_from_continuous<T: Scalar>(
    c: &ContinuousCoefficients<T>,
    stencil: &Arc<Stencil>,
    grid: &Arc<TorusGrid<T>>,
    tg: &TimeGrid<T>,
) -> Result<DiscreteCoefficients<T>, CoeffError> {
    let d = c.dim();
    if **stencil != Stencil::coordinate(d) {
        return Err(CoeffError::UnsupportedStencil);
    }
    for alpha in 1..=d {
        for beta in 1..=d {
            if alpha != beta && probe_nonzero(c.a_field(alpha, beta), d, tg.horizon()) {
                return Err(CoeffError::NonDiagonalDiffusion(alpha, beta));
            }
        }
    }

    let l = stencil.len(); // d + 1
    let mut a = vec![SampledField::zero(); l * l];
    let mut b = vec![SampledField::zero(); l * c.noise_dim()];

    let from = |field: &ScalarField<T>| -> SampledField<T> {
        let kind = field.kind();
        let f = field.clone();
        sample_field(&move |t, x: &[T]| f.eval(t, x), kind, grid, tg)
    };

    a[0] = from(c.a_field(0, 0));
    for j in 1..=d {
        a[j * l + j] = from(c.a_field(j, j));
        // the symmetrizing constructor averages this with the zero slot,
        // splitting a^{j0} + a^{0j} evenly between 𝔞^{e_j 0} and 𝔞^{0 e_j}
        let aj0 = c.a_field(j, 0).clone();
        let a0j = c.a_field(0, j).clone();
        let kind = match (aj0.kind(), a0j.kind()) {
            (FieldKind::Constant, k) | (k, FieldKind::Constant) => k,
            (k1, k2) if k1 == k2 => k1,
            _ => FieldKind::General,
        };
        a[j * l] = sample_field(
            &move |t, x: &[T]| aj0.eval(t, x) + a0j.eval(t, x),
            kind,
            grid,
            tg,
        );
        // a[0 * l + j] stays zero
        for rho in 0..c.noise_dim() {
            b[j * c.noise_dim() + rho] = from(c.b_field(j, rho));
        }
    }
    for rho in 0..c.noise_dim() {
        b[rho] = from(c.b_field(0, rho));
    }

    DiscreteCoefficients::new(
        stencil.clone(),
        Some(grid.clone()),
        tg.steps(),
        c.noise_dim(),
        a,
        b,
    )
}

/// Low-discrepancy `(t, x)` cloud for sampling-based validators.
pub fn quasi_random_cloud<T: Scalar>(
    horizon: T,
    side_lengths: &[T],
    count: usize,
) -> Vec<(T, Vec<T>)> {
    // additive recurrence with square-root irrationals, one per coordinate
    const SEEDS: [f64; 9] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0];
    let d = side_lengths.len();
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let frac = |irr: f64| -> f64 {
            let v = k as f64 * irr.sqrt();
            v - v.floor()
        };
        let t = horizon * cast::<T>(frac(SEEDS[0]));
        let x = (0..d)
            .map(|a| side_lengths[a] * cast::<T>(frac(SEEDS[(a + 1) % SEEDS.len()])))
            .collect();
        out.push((t, x));
    }
    out
}
