//! Periodic torus grids, grid functions, finite differences and discrete
//! norms.
//!
//! A grid covers `[0, L)^d` with `n` points per axis and uniform spacing
//! `h = L / n`; every difference wraps around periodically. The difference
//! quotient `δ_{h,λ} φ(x) = (φ(x + hλ) − φ(x)) / h` accepts a signed mesh
//! argument, so one operator covers the forward (`h > 0`) and backward
//! (`h < 0`) variants.

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{cast_usize, Scalar};
use crate::stencil::{offset_tuples, OffsetTuple, Stencil, StencilError};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid side lengths must be positive")]
    NonpositiveSideLength,
    #[error("grid needs at least one point per axis")]
    EmptyAxis,
    #[error("grid spacing differs between axes")]
    NonuniformSpacing,
    #[error("value count {got} does not match grid point count {want}")]
    ValueCountMismatch { got: usize, want: usize },
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("|h_signed| = {got} does not equal the grid spacing {want}")]
    SpacingMismatch { got: f64, want: f64 },
    #[error("offset dimension does not match grid dimension")]
    DimensionMismatch,
    #[error("grids are not nested with per-axis refinement 2^{0}")]
    NotNested(usize),
    #[error(transparent)]
    Stencil(#[from] StencilError),
}

/// Uniformly spaced periodic grid on `[0, L_1) × ... × [0, L_d)`.
///
/// Per-axis side lengths and point counts are stored; the spacing
/// `h = L_a / n_a` must agree exactly across axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid<T: Scalar> {
    side_lengths: Vec<T>,
    points_per_axis: Vec<usize>,
    strides: Vec<usize>,
    spacing: T,
}

impl<T: Scalar> TorusGrid<T> {
    pub fn new(side_lengths: Vec<T>, points_per_axis: Vec<usize>) -> Result<Arc<Self>, GridError> {
        if side_lengths.is_empty() || side_lengths.len() != points_per_axis.len() {
            return Err(GridError::EmptyAxis);
        }
        if side_lengths
            .iter()
            .any(|&l| !(l > T::zero()) || !l.is_finite())
        {
            return Err(GridError::NonpositiveSideLength);
        }
        if points_per_axis.iter().any(|&n| n == 0) {
            return Err(GridError::EmptyAxis);
        }
        let spacing = side_lengths[0] / cast_usize::<T>(points_per_axis[0]);
        for (l, &n) in side_lengths.iter().zip(&points_per_axis) {
            if *l / cast_usize::<T>(n) != spacing {
                return Err(GridError::NonuniformSpacing);
            }
        }
        let d = points_per_axis.len();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * points_per_axis[a + 1];
        }
        Ok(Arc::new(Self {
            side_lengths,
            points_per_axis,
            strides,
            spacing,
        }))
    }

    /// Cube `[0, l)^dim` with `n` points per axis.
    pub fn cube(dim: usize, l: T, n: usize) -> Result<Arc<Self>, GridError> {
        Self::new(vec![l; dim], vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.points_per_axis.len()
    }

    pub fn side_lengths(&self) -> &[T] {
        &self.side_lengths
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points_per_axis
    }

    /// Uniform spacing `h = L_a / n_a`.
    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn point_count(&self) -> usize {
        self.points_per_axis.iter().product()
    }

    /// Row-major strides, axis 0 slowest.
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Physical coordinates of the point with the given flat index.
    pub fn coords_of(&self, mut flat: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim()];
        for a in 0..self.dim() {
            let idx = flat / self.strides[a];
            flat %= self.strides[a];
            x[a] = cast_usize::<T>(idx) * self.spacing;
        }
        x
    }

    /// Flat index of the point shifted by `steps` index units per axis,
    /// wrapping periodically.
    #[inline]
    fn shifted_flat(&self, multi: &[usize], steps: &[i64]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim() {
            let n = self.points_per_axis[a] as i64;
            let idx = (multi[a] as i64 + steps[a]).rem_euclid(n) as usize;
            flat += idx * self.strides[a];
        }
        flat
    }

    fn advance_multi(&self, multi: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            multi[a] += 1;
            if multi[a] < self.points_per_axis[a] {
                return;
            }
            multi[a] = 0;
        }
    }
}

/// Real values sampled on a torus grid, one entry per grid point, stored
/// row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn zeros(grid: Arc<TorusGrid<T>>) -> Self {
        let n = grid.point_count();
        Self {
            grid,
            values: vec![T::zero(); n],
        }
    }

    pub fn constant(grid: Arc<TorusGrid<T>>, c: T) -> Self {
        let n = grid.point_count();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    pub fn from_values(grid: Arc<TorusGrid<T>>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.point_count() {
            return Err(GridError::ValueCountMismatch {
                got: values.len(),
                want: grid.point_count(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue(bad));
        }
        Ok(Self { grid, values })
    }

    /// Samples a closed form `f(x)` at every grid point.
    pub fn sample(grid: Arc<TorusGrid<T>>, f: impl Fn(&[T]) -> T) -> Self {
        let d = grid.dim();
        let mut multi = vec![0usize; d];
        let mut x = vec![T::zero(); d];
        let mut values = Vec::with_capacity(grid.point_count());
        for _ in 0..grid.point_count() {
            for a in 0..d {
                x[a] = cast_usize::<T>(multi[a]) * grid.spacing();
            }
            values.push(f(&x));
            grid.advance_multi(&mut multi);
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        if let Some(bad) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue(bad));
        }
        Ok(())
    }

    fn same_grid(&self, other: &Self) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    /// Pointwise combination `self ← self + c · other`.
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<(), GridError> {
        self.same_grid(other)?;
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += c * *o;
        }
        Ok(())
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_pointwise(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Translation `(T_{h,λ} φ)(x) = φ(x + h_signed · λ)` with periodic wrap.
    pub fn translate(&self, offset: &[i64], h_signed: T) -> Result<Self, GridError> {
        let steps = self.offset_steps(offset, h_signed)?;
        let g = &self.grid;
        let mut multi = vec![0usize; g.dim()];
        let mut values = Vec::with_capacity(self.values.len());
        for _ in 0..self.values.len() {
            values.push(self.values[g.shifted_flat(&multi, &steps)]);
            g.advance_multi(&mut multi);
        }
        Ok(Self {
            grid: g.clone(),
            values,
        })
    }

    /// Validates `h_signed` against the grid spacing and converts the offset
    /// into signed index steps per axis.
    fn offset_steps(&self, offset: &[i64], h_signed: T) -> Result<Vec<i64>, GridError> {
        if offset.len() != self.grid.dim() {
            return Err(GridError::DimensionMismatch);
        }
        if h_signed.abs() != self.grid.spacing() {
            return Err(GridError::SpacingMismatch {
                got: h_signed.abs().to_f64().unwrap_or(f64::NAN),
                want: self.grid.spacing().to_f64().unwrap_or(f64::NAN),
            });
        }
        let sign = if h_signed > T::zero() { 1i64 } else { -1i64 };
        Ok(offset.iter().map(|&o| sign * o).collect())
    }

    /// Difference quotient `δ_{h,λ} φ(x) = (φ(x + h_signed λ) − φ(x)) / h_signed`,
    /// with periodic wraparound; the zero offset is the identity.
    pub fn diff(&self, offset: &[i64], h_signed: T) -> Result<Self, GridError> {
        let steps = self.offset_steps(offset, h_signed)?;
        if offset.iter().all(|&o| o == 0) {
            return Ok(self.clone());
        }
        let g = &self.grid;
        let inv_h = T::one() / h_signed;
        let mut multi = vec![0usize; g.dim()];
        let mut values = Vec::with_capacity(self.values.len());
        for flat in 0..self.values.len() {
            let shifted = self.values[g.shifted_flat(&multi, &steps)];
            values.push((shifted - self.values[flat]) * inv_h);
            g.advance_multi(&mut multi);
        }
        Ok(Self {
            grid: g.clone(),
            values,
        })
    }

    /// Variant of [`diff`](Self::diff) that also checks membership of the
    /// offset in a stencil.
    pub fn diff_in(
        &self,
        stencil: &Stencil,
        offset: &[i64],
        h_signed: T,
    ) -> Result<Self, GridError> {
        stencil.require_member(offset)?;
        self.diff(offset, h_signed)
    }

    /// Left-to-right composition `δ_{h,λ_1} ∘ ... ∘ δ_{h,λ_p}`; the empty
    /// tuple is the identity.
    pub fn composite_diff(&self, tuple: &OffsetTuple, h_signed: T) -> Result<Self, GridError> {
        let mut out = self.clone();
        for component in tuple.components().iter().rev() {
            out = out.diff(component, h_signed)?;
        }
        Ok(out)
    }

    /// Discrete `ℓ²(G_h)` norm: `sqrt( h^d Σ_x φ(x)² )`.
    pub fn l2_grid_norm(&self) -> T {
        let hd = self.grid.spacing().powi(self.grid.dim() as i32);
        let sum = self.values.iter().fold(T::zero(), |acc, &v| acc + v * v);
        (hd * sum).sqrt()
    }

    /// Max of `|φ(x)|` over grid points.
    pub fn sup_grid_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Pure `r`-fold difference norm: the square root of the sum over all
    /// ordered `r`-tuples from the stencil of the squared `ℓ²(G_h)` norm of
    /// the composite difference. For `r = 0` this is the plain grid norm.
    pub fn difference_sobolev_norm(&self, stencil: &Stencil, r: usize) -> Result<T, GridError> {
        let h = self.grid.spacing();
        let mut total = T::zero();
        for tuple in offset_tuples(stencil, r) {
            let norm = self.composite_diff(&tuple, h)?.l2_grid_norm();
            total += norm * norm;
        }
        Ok(total.sqrt())
    }

    /// Restriction from this (fine) grid onto the grid coarsened by `2^j`
    /// per axis: keeps every `2^j`-th sample starting at the origin.
    pub fn restrict_to_coarser(&self, j: usize) -> Result<Self, GridError> {
        if j == 0 {
            return Ok(self.clone());
        }
        let factor = 1usize << j;
        let fine = &self.grid;
        let mut coarse_counts = Vec::with_capacity(fine.dim());
        for &n in fine.points_per_axis() {
            if n % factor != 0 {
                return Err(GridError::NotNested(j));
            }
            coarse_counts.push(n / factor);
        }
        let coarse = TorusGrid::new(fine.side_lengths().to_vec(), coarse_counts)?;
        let d = fine.dim();
        let mut multi = vec![0usize; d];
        let mut values = Vec::with_capacity(coarse.point_count());
        for _ in 0..coarse.point_count() {
            let mut flat = 0usize;
            for a in 0..d {
                flat += multi[a] * factor * fine.strides[a];
            }
            values.push(self.values[flat]);
            coarse.advance_multi(&mut multi);
        }
        Ok(Self {
            grid: coarse,
            values,
        })
    }

    /// Dot product in the plain (unweighted) sense `Σ_x φ(x) ψ(x)`.
    pub fn dot(&self, other: &Self) -> Result<T, GridError> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type G64 = GridFunction<f64>;

    fn grid1d(n: usize) -> Arc<TorusGrid<f64>> {
        TorusGrid::cube(1, 1.0, n).unwrap()
    }

    #[test]
    fn spacing_must_be_uniform() {
        assert!(TorusGrid::new(vec![1.0, 1.0], vec![8, 16]).is_err());
        assert!(TorusGrid::new(vec![1.0, 2.0], vec![8, 16]).is_ok());
    }

    #[test]
    fn diff_of_constant_vanishes() {
        let g = grid1d(10);
        let f = G64::constant(g.clone(), 3.5);
        let d = f.diff(&[1], g.spacing()).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_offset_is_identity() {
        let g = grid1d(10);
        let f = G64::sample(g.clone(), |x| x[0].sin());
        let d = f.diff(&[0], g.spacing()).unwrap();
        assert_eq!(d.values(), f.values());
    }

    #[test]
    fn forward_difference_of_linear_function() {
        // f(x) = x on [0,1) with n = 10, h = 0.1: slope 1 away from the seam
        let g = grid1d(10);
        let f = G64::sample(g.clone(), |x| x[0]);
        let d = f.diff(&[1], 0.1).unwrap();
        for i in 0..9 {
            assert!((d.values()[i] - 1.0).abs() < 1e-12, "interior point {i}");
        }
        // seam wraps: (f(0) - f(0.9)) / 0.1 = -9
        assert!((d.values()[9] + 9.0).abs() < 1e-12);
    }

    #[test]
    fn spacing_checked() {
        let g = grid1d(10);
        let f = G64::constant(g, 0.0);
        assert!(matches!(
            f.diff(&[1], 0.2),
            Err(GridError::SpacingMismatch { .. })
        ));
    }

    #[test]
    fn second_difference_of_quadratic() {
        // δ_{h,1} δ_{-h,1} x² = 2 away from the seam
        let g = grid1d(16);
        let h = g.spacing();
        let f = G64::sample(g, |x| x[0] * x[0]);
        let d = f.diff(&[1], -h).unwrap().diff(&[1], h).unwrap();
        for i in 1..15 {
            assert!(
                (d.values()[i] - 2.0).abs() < 1e-10,
                "point {i}: {}",
                d.values()[i]
            );
        }
    }

    #[test]
    fn composite_empty_is_identity() {
        let g = grid1d(8);
        let f = G64::sample(g.clone(), |x| (x[0] * 7.0).cos());
        let out = f
            .composite_diff(&OffsetTuple::identity(), g.spacing())
            .unwrap();
        assert_eq!(out.values(), f.values());
    }

    #[test]
    fn l2_norm_of_unit_constant_is_sqrt_volume() {
        let g = TorusGrid::cube(2, 2.0f64, 8).unwrap();
        let f = GridFunction::constant(g, 1.0);
        // L^{d/2} = 2^{2/2} = 2
        assert!((f.l2_grid_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn l2_norm_homogeneity() {
        let g = grid1d(32);
        let f = G64::sample(g, |x| (x[0] * 13.0).sin() + 0.3);
        let c = -2.75;
        assert!((f.scaled(c).l2_grid_norm() - c.abs() * f.l2_grid_norm()).abs() < 1e-12);
    }

    #[test]
    fn sup_norm_takes_absolute_value() {
        let g = grid1d(5);
        let mut f = G64::zeros(g);
        f.values_mut()[3] = -3.0;
        assert_eq!(f.sup_grid_norm(), 3.0);
        assert_eq!(G64::zeros(grid1d(5)).sup_grid_norm(), 0.0);
    }

    #[test]
    fn sobolev_norm_r0_is_l2() {
        let s = Stencil::coordinate(1);
        let g = grid1d(16);
        let f = G64::sample(g, |x| x[0].sin());
        assert_eq!(f.difference_sobolev_norm(&s, 0).unwrap(), f.l2_grid_norm());
    }

    #[test]
    fn sobolev_norm_of_constant_r1() {
        // only the zero-offset tuple survives: value |c| L^{d/2}
        let s = Stencil::coordinate(1);
        let g = grid1d(16);
        let f = G64::constant(g, -4.0);
        let got = f.difference_sobolev_norm(&s, 1).unwrap();
        assert!((got - 4.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_identity_and_sampling() {
        let fine = TorusGrid::cube(1, 1.0, 16).unwrap();
        let f = G64::sample(fine, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let same = f.restrict_to_coarser(0).unwrap();
        assert_eq!(same.values(), f.values());

        let coarse = f.restrict_to_coarser(1).unwrap();
        assert_eq!(coarse.grid().point_count(), 8);
        let direct = G64::sample(coarse.grid().clone(), |x| {
            (2.0 * std::f64::consts::PI * x[0]).sin()
        });
        for (a, b) in coarse.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_rejects_non_nested() {
        let g = TorusGrid::cube(1, 1.0, 12).unwrap();
        let f = G64::zeros(g);
        assert!(matches!(
            f.restrict_to_coarser(3),
            Err(GridError::NotNested(3))
        ));
    }

    #[test]
    fn from_values_rejects_nan() {
        let g = grid1d(4);
        assert!(matches!(
            G64::from_values(g, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFiniteValue(1))
        ));
    }

    #[test]
    fn diff_in_enforces_stencil_membership() {
        let s = Stencil::coordinate(1);
        let g = grid1d(8);
        let f = G64::sample(g.clone(), |x| x[0]);
        assert!(f.diff_in(&s, &[1], g.spacing()).is_ok());
        assert!(matches!(
            f.diff_in(&s, &[2], g.spacing()),
            Err(GridError::Stencil(_))
        ));
    }

    #[test]
    fn translate_shifts_periodically() {
        let g = grid1d(4);
        let f = G64::from_values(g.clone(), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let t = f.translate(&[1], g.spacing()).unwrap();
        assert_eq!(t.values(), &[1.0, 2.0, 3.0, 0.0]);
        let back = f.translate(&[1], -g.spacing()).unwrap();
        assert_eq!(back.values(), &[3.0, 0.0, 1.0, 2.0]);
    }
}
