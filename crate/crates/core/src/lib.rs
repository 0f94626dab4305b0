//! Implicit space-time finite-difference schemes for linear parabolic SPDEs
//! on a periodic torus, Richardson extrapolation of the spatial mesh, and the
//! spectral machinery used to verify the accelerated convergence orders.
//!
//! All numerical kernels are generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); concrete `f64` aliases are exported at the crate root.

pub mod coeffs;
pub mod expansion;
pub mod expr;
pub mod grid;
pub mod linalg;
pub mod noise;
pub mod richardson;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod stencil;

pub use grid::{GridError, GridFunction, TorusGrid};
pub use scalar::{cast, Scalar};
pub use stencil::{OffsetTuple, Stencil, StencilError};

/// Concrete double-precision aliases.
pub type TorusGrid64 = TorusGrid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type TimeGrid64 = noise::TimeGrid<f64>;
pub type NoisePath64 = noise::NoisePath<f64>;
pub type Trajectory64 = solver::Trajectory<f64>;
pub type SchemeProblem64 = solver::SchemeProblem<f64>;
pub type ContinuousCoefficients64 = coeffs::ContinuousCoefficients<f64>;
pub type DiscreteCoefficients64 = coeffs::DiscreteCoefficients<f64>;
pub type RichardsonWeights64 = richardson::RichardsonWeights<f64>;

/// Concrete single-precision aliases.
pub type TorusGrid32 = TorusGrid<f32>;
pub type GridFunction32 = GridFunction<f32>;
pub type Trajectory32 = solver::Trajectory<f32>;
