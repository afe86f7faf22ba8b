//! Numerics for the weakly degenerate parabolic operator `u_t - (x^a u_x)_x`
//! on `(0,1) x (0,T)` with `0 <= a < 1`.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: power-graded space grids, uniform time grids, nodal fields,
//!   singular-weight quadrature and the discrete weighted norms.
//! * [`operator`]: the conservative flux-form discretization of `(x^a u_x)_x`,
//!   its conormal trace at the degenerate endpoint, Hardy-type bound checks
//!   and a small tridiagonal eigensolver.
//! * [`evolution`]: the boundary-controlled forward problem (via the lifting
//!   `1 - x^(1-a)`) and the backward adjoint problem.
//! * [`carleman`]: Carleman weights, the conjugated-operator splitting and the
//!   numerical evaluation of both sides of the weighted estimates.
//! * [`control`]: the boundary control operator, the duality pairing with the
//!   adjoint conormal trace, and penalized conjugate-gradient synthesis.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below are what the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

pub mod carleman;
pub mod control;
pub mod error;
pub mod evolution;
pub mod io;
pub mod mesh;
pub mod operator;
pub mod scalar;
pub mod tridiag;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use carleman::{CarlemanContext, CarlemanSides, Variant};
pub use control::{ControlResult, ControlTask};
pub use evolution::{AdjointProblem, ForwardProblem, Scheme, Trajectory};
pub use mesh::{GradedMesh, GridFunction, WeightedNorms};
pub use operator::{Boundary, DegenerateOperator, HardyReport};

pub type GradedMesh64 = GradedMesh<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type DegenerateOperator64 = DegenerateOperator<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type CarlemanContext64 = CarlemanContext<f64>;
pub type ControlTask64 = ControlTask<f64>;
pub type ControlResult64 = ControlResult<f64>;

pub type GradedMesh32 = GradedMesh<f32>;
pub type GridFunction32 = GridFunction<f32>;
pub type DegenerateOperator32 = DegenerateOperator<f32>;
