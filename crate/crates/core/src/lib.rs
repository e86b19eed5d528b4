//! Impulsive Volterra control problems.
//!
//! The state solves
//! `x(s) = h(s) + ∫_0^s f(s,t,x(t),u(t)) dt + Σ_{τ_i<s} G(s,τ_i,x(τ_i⁻),a_i,a_{i+1})`
//! under a piecewise-constant control `u = a_i` on `[τ_{i−1}, τ_i)`. The crate
//! provides forward solvers, the linear theory (path sums, combined kernel,
//! resolvent, duality), first-order sensitivities, the adjoint gradient with
//! a stationarity check, the ODE special case, and a projected-gradient
//! optimizer. Everything is `no_std` with `alloc`.

#![no_std]
// NaN-rejecting `!(a <= b)` tests and node-indexed loops are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod adjoint;
pub mod catalog;
pub mod error;
pub mod forward;
pub mod kernel;
pub mod linear;
pub mod mesh;
pub mod model;
pub mod ode;
pub mod optimizer;
pub mod variational;

pub use error::{Error, Result};
pub use mesh::{build_mesh, Side, TimeMesh};
pub use model::{
    control_at, eval_cost, ControlBox, ControlPolicy, ControlVariation, Matrix, PiecewiseTrajectory, ProblemSpec,
    Vector,
};
