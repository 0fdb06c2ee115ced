//! Three-point time filters and discrete curvature.
//!
//! All filters act componentwise. The curvature of three points
//! `(t[n-1], y[n-1]), (t[n], y[n]), (t[n+1], y[n+1])` is
//! `k[n-1] k[n]` times the second derivative of their quadratic interpolant,
//! which reduces to the closed-form weights used in [`discrete_curvature`].

use crate::error::{Error, Result};
use crate::ode::StateVec;

/// Customary strength of the Robert-Asselin filter.
pub const RA_DEFAULT_NU: f64 = 0.1;

/// Filter strength `nu` and step ratio `tau = k[n] / k[n-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub nu: f64,
    pub tau: f64,
}

impl FilterParams {
    pub fn new(nu: f64, tau: f64) -> Result<Self> {
        if !nu.is_finite() {
            return Err(Error::config(format!("filter strength must be finite, got {nu}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::config(format!("step ratio must be positive, got {tau}")));
        }
        Ok(FilterParams { nu, tau })
    }

    pub fn constant_step(nu: f64) -> Result<Self> {
        Self::new(nu, 1.0)
    }
}

/// Three consecutive states and the two steps between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreePointWindow {
    pub y_nm1: StateVec,
    pub y_n: StateVec,
    pub y_np1: StateVec,
    pub k_nm1: f64,
    pub k_n: f64,
}

impl ThreePointWindow {
    pub fn new(y_nm1: StateVec, y_n: StateVec, y_np1: StateVec, k_nm1: f64, k_n: f64) -> Result<Self> {
        same_dim(&y_np1, &y_n)?;
        same_dim(&y_np1, &y_nm1)?;
        if !(k_nm1 > 0.0 && k_n > 0.0 && k_nm1.is_finite() && k_n.is_finite()) {
            return Err(Error::config("window step sizes must be positive"));
        }
        Ok(ThreePointWindow {
            y_nm1,
            y_n,
            y_np1,
            k_nm1,
            k_n,
        })
    }

    pub fn tau(&self) -> f64 {
        self.k_n / self.k_nm1
    }
}

fn same_dim(a: &StateVec, b: &StateVec) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

// Written on differences so constant data gives exactly zero.
fn curvature(y_np1: &StateVec, y_n: &StateVec, y_nm1: &StateVec, tau: f64) -> StateVec {
    let a = 2.0 / (1.0 + tau);
    let c = 2.0 * tau / (1.0 + tau);
    StateVec::from_fn(y_np1.len(), |i, _| a * (y_np1[i] - y_n[i]) - c * (y_n[i] - y_nm1[i]))
}

/// `y* - (nu/2)(y* - 2 y[n] + y[n-1])`.
pub fn apply_constant_filter(y_star: &StateVec, y_n: &StateVec, y_nm1: &StateVec, nu: f64) -> Result<StateVec> {
    same_dim(y_star, y_n)?;
    same_dim(y_star, y_nm1)?;
    let half = 0.5 * nu;
    Ok(StateVec::from_fn(y_star.len(), |i, _| {
        y_star[i] - half * ((y_star[i] - y_n[i]) - (y_n[i] - y_nm1[i]))
    }))
}

/// Variable-step filter: `y* - (nu/2) kappa`, with `kappa` the discrete
/// curvature of `(y[n-1], y[n], y*)`. Identical to the constant-step filter at `tau = 1`.
pub fn apply_variable_filter(
    y_star: &StateVec,
    y_n: &StateVec,
    y_nm1: &StateVec,
    params: FilterParams,
) -> Result<StateVec> {
    same_dim(y_star, y_n)?;
    same_dim(y_star, y_nm1)?;
    let half = 0.5 * params.nu;
    let kappa = curvature(y_star, y_n, y_nm1, params.tau);
    Ok(StateVec::from_fn(y_star.len(), |i, _| y_star[i] - half * kappa[i]))
}

/// `(2/(1+tau)) y[n+1] - 2 y[n] + (2 tau/(1+tau)) y[n-1]` with `tau = k[n]/k[n-1]`.
pub fn discrete_curvature(w: &ThreePointWindow) -> StateVec {
    curvature(&w.y_np1, &w.y_n, &w.y_nm1, w.tau())
}

/// Factor by which the variable-step filter scales the discrete curvature.
pub fn curvature_factor(params: FilterParams) -> f64 {
    1.0 - params.nu / (1.0 + params.tau)
}

/// The filter strength giving a second-order method at step ratio `tau`.
pub fn second_order_nu(tau: f64) -> f64 {
    tau * (1.0 + tau) / (1.0 + 2.0 * tau)
}

/// Filter strength equivalent to applying the constant-step filter twice.
pub fn double_filter_nu(nu: f64) -> f64 {
    nu * (2.0 - 0.5 * nu)
}

/// Robert-Asselin filter centred at `t[n]`: `y[n] + (nu/2) kappa`.
pub fn apply_ra_filter(y_nm1: &StateVec, y_n: &StateVec, y_np1: &StateVec, params: FilterParams) -> Result<StateVec> {
    same_dim(y_n, y_nm1)?;
    same_dim(y_n, y_np1)?;
    let half = 0.5 * params.nu;
    let kappa = curvature(y_np1, y_n, y_nm1, params.tau);
    Ok(StateVec::from_fn(y_n.len(), |i, _| y_n[i] + half * kappa[i]))
}
