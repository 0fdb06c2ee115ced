//! Backward Euler with a curvature-reducing time filter.
//!
//! The filtered step computes a backward Euler value and then subtracts a
//! multiple of the discrete curvature of the last three points. On constant
//! steps with `nu = 2/3` the pair is second order and A-stable; on variable
//! steps `nu = tau (1 + tau) / (1 + 2 tau)` keeps second order. The size of
//! the filter correction doubles as a local error estimator for step control.

// `!(a > b)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod analysis;
pub mod error;
pub mod filters;
pub mod integrators;
pub mod ode;
pub mod problems;

pub use error::{Error, Result};
pub use ode::{Matrix, OdeProblem, SolverConfig, StateVec};
