//! Coefficient algebra and diagnostics for the two-step methods.
//!
//! Every method here is written in the one-leg form
//!
//! ```text
//! a2 y[n+1] + a1 y[n] + a0 y[n-1] = k[n] f(t[n+1], b2 y[n+1] + b1 y[n] + b0 y[n-1])
//! ```
//!
//! with `b2 + b1 + b0 = 1`. Backward Euler plus the variable-step filter with
//! strength `nu` at step ratio `tau` is the member
//!
//! ```text
//! a2 = b2 = (1+tau)/(1+tau-nu)
//! a1 = -(1+tau+nu tau)/(1+tau-nu)      b1 = -nu (1+tau)/(1+tau-nu)
//! a0 = b0 = tau nu/(1+tau-nu)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for the algebraic order and stability conditions.
pub const CONDITION_TOL: f64 = 1e-12;

/// Distance below which `nu` counts as the degenerate value `1 + tau`.
const DEGENERATE_TOL: f64 = 1e-12;

/// Default number of samples on a stability boundary locus.
pub const DEFAULT_BOUNDARY_POINTS: usize = 3601;

/// Coefficients `(a2, a1, a0)` and `(b2, b1, b0)` of a one-leg two-step method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmCoefficients {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub tau: f64,
}

impl LmmCoefficients {
    fn scale(&self) -> f64 {
        self.alpha
            .iter()
            .chain(self.beta.iter())
            .fold(1.0f64, |m, c| m.max(c.abs()))
    }

    /// The four leading Taylor terms of the local truncation error, i.e. the
    /// factors multiplying `y`, `k y'`, `k^2 y''` and `k^3 y'''` at `t[n]`.
    pub fn lte_terms(&self) -> [f64; 4] {
        let [a2, a1, a0] = self.alpha;
        let [b2, b1, b0] = self.beta;
        let t = self.tau;
        [
            a2 + a1 + a0,
            a2 - a0 / t - (b2 + b1 + b0),
            0.5 * a2 + a0 / (2.0 * t * t) - b2 + b0 / t,
            a2 / 6.0 - a0 / (6.0 * t * t * t) - b2 / 2.0 - b0 / (2.0 * t * t),
        ]
    }

    /// Roots of `rho(z) = a2 z^2 + a1 z + a0`.
    pub fn rho_roots(&self) -> [Complex64; 2] {
        let [a2, a1, a0] = self.alpha;
        quadratic_roots(a2.into(), a1.into(), a0.into()).expect("a2 is nonzero for valid coefficients")
    }

    /// Roots of the stability polynomial
    /// `(a2 - z b2) r^2 + (a1 - z b1) r + (a0 - z b0)` at `z = lambda k`.
    /// `None` when the leading coefficient vanishes (a root at infinity).
    pub fn stability_roots(&self, lambda_k: Complex64) -> Option<[Complex64; 2]> {
        let c = |i: usize| Complex64::from(self.alpha[i]) - lambda_k * self.beta[i];
        quadratic_roots(c(0), c(1), c(2))
    }

    /// Root condition for `lambda_k`: both roots in the closed unit disk,
    /// strictly inside when repeated.
    pub fn is_stable_at(&self, lambda_k: Complex64) -> bool {
        match self.stability_roots(lambda_k) {
            Some(roots) => root_condition(&roots),
            None => false,
        }
    }
}

fn root_condition(roots: &[Complex64; 2]) -> bool {
    let on_circle_tol = 1e-12;
    let repeated = (roots[0] - roots[1]).norm() <= 1e-9;
    roots.iter().all(|z| {
        let r = z.norm();
        if repeated {
            r < 1.0 - on_circle_tol
        } else {
            r <= 1.0 + on_circle_tol
        }
    })
}

/// Roots of `a z^2 + b z + c`, computed without cancellation.
fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64) -> Option<[Complex64; 2]> {
    if a.norm() == 0.0 || !a.norm().is_finite() {
        return None;
    }
    let disc = (b * b - a * c * 4.0).sqrt();
    // pick the sign that avoids cancellation in -b +- disc
    let q = if (b.conj() * disc).re >= 0.0 {
        -(b + disc) * 0.5
    } else {
        -(b - disc) * 0.5
    };
    if q.norm() == 0.0 {
        return Some([Complex64::new(0.0, 0.0); 2]);
    }
    Some([q / a, c / q])
}

fn check_nu(nu: f64, tau: f64) -> Result<()> {
    if !nu.is_finite() {
        return Err(Error::config(format!("filter strength must be finite, got {nu}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::config(format!("step ratio must be positive, got {tau}")));
    }
    let excluded = 1.0 + tau;
    if (nu - excluded).abs() <= DEGENERATE_TOL * excluded {
        return Err(Error::DegenerateNu { nu, excluded });
    }
    Ok(())
}

/// One-leg coefficients of backward Euler plus the filter with strength `nu`
/// at step ratio `tau`.
pub fn lmm_coefficients(nu: f64, tau: f64) -> Result<LmmCoefficients> {
    check_nu(nu, tau)?;
    let d = 1.0 + tau - nu;
    let a2 = (1.0 + tau) / d;
    let a0 = tau * nu / d;
    Ok(LmmCoefficients {
        alpha: [a2, -(1.0 + tau + nu * tau) / d, a0],
        beta: [a2, -nu * (1.0 + tau) / d, a0],
        tau,
    })
}

/// Variable-step BDF2: `((2tau+1)/(tau+1), -(tau+1), tau^2/(tau+1))` with
/// `f` evaluated at `y[n+1]` alone.
pub fn bdf2_coefficients(tau: f64) -> LmmCoefficients {
    LmmCoefficients {
        alpha: [(2.0 * tau + 1.0) / (tau + 1.0), -(tau + 1.0), tau * tau / (tau + 1.0)],
        beta: [1.0, 0.0, 0.0],
        tau,
    }
}

/// 0 if inconsistent, 1 if consistent only, 2 if also second order.
pub fn check_order(c: &LmmCoefficients) -> u8 {
    let tol = CONDITION_TOL * c.scale();
    let [c0, c1, c2, _] = c.lte_terms();
    if c0.abs() > tol || c1.abs() > tol {
        0
    } else if c2.abs() > tol {
        1
    } else {
        2
    }
}

/// Leading local truncation error factor `-(1+4tau)/(6tau)` of the
/// second-order filtered method; the error is this times `k^3 y'''`.
pub fn lte_leading_coefficient(tau: f64) -> f64 {
    -(1.0 + 4.0 * tau) / (6.0 * tau)
}

/// A single sufficient condition together with its evaluated left-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub value: f64,
    pub holds: bool,
}

impl Condition {
    fn nonnegative(value: f64, scale: f64) -> Self {
        Condition {
            value,
            holds: value >= -CONDITION_TOL * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `-a1 >= 0`
    pub cond1: Condition,
    /// `1 - 2 b1 >= 0`
    pub cond2: Condition,
    /// `2 (b2 - b0) + a1 >= 0`
    pub cond3: Condition,
    pub a_stable: bool,
    pub zero_stable: bool,
    /// Roots of `rho`; at `tau = 1` these are `1` and `nu/2`.
    pub roots: [Complex64; 2],
}

/// The three A-stability conditions evaluated on arbitrary coefficients.
pub fn dahlquist_conditions(c: &LmmCoefficients) -> [Condition; 3] {
    let [_, a1, _] = c.alpha;
    let [b2, b1, b0] = c.beta;
    let s = c.scale();
    [
        Condition::nonnegative(-a1, s),
        Condition::nonnegative(1.0 - 2.0 * b1, s),
        Condition::nonnegative(2.0 * (b2 - b0) + a1, s),
    ]
}

pub fn astability_report(nu: f64, tau: f64) -> Result<StabilityReport> {
    let c = lmm_coefficients(nu, tau)?;
    let [cond1, cond2, cond3] = dahlquist_conditions(&c);
    let roots = c.rho_roots();
    Ok(StabilityReport {
        cond1,
        cond2,
        cond3,
        a_stable: cond1.holds && cond2.holds && cond3.holds,
        zero_stable: root_condition(&roots),
        roots,
    })
}

/// Interval of `nu` satisfying all three conditions at ratio `tau`:
/// `[-(1+tau)/(1+2tau), min((1+tau)/(3tau), 1+tau)]`.
pub fn astable_nu_range(tau: f64) -> (f64, f64) {
    let lo = -(1.0 + tau) / (1.0 + 2.0 * tau);
    let hi = ((1.0 + tau) / (3.0 * tau)).min(1.0 + tau);
    (lo, hi)
}

pub fn bdf2_variable_astable(tau: f64) -> bool {
    dahlquist_conditions(&bdf2_coefficients(tau)).iter().all(|c| c.holds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub theta: f64,
    pub lambda_k: Complex64,
}

/// Boundary locus `lambda k = rho(e^{i theta}) / sigma(e^{i theta})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLocus {
    pub points: Vec<BoundaryPoint>,
    /// Angles where `sigma` vanished; those samples are omitted from `points`.
    pub poles: Vec<f64>,
}

/// Samples the boundary locus of any two-step method at `n_points` angles
/// evenly spaced on `[0, 2 pi)`.
pub fn boundary_locus(c: &LmmCoefficients, n_points: usize) -> Result<BoundaryLocus> {
    if n_points < 8 {
        return Err(Error::config(format!(
            "need at least 8 boundary points, got {n_points}"
        )));
    }
    let [a2, a1, a0] = c.alpha;
    let [b2, b1, b0] = c.beta;
    let scale = c.scale();
    let mut points = Vec::with_capacity(n_points);
    let mut poles = Vec::new();
    for j in 0..n_points {
        let theta = 2.0 * PI * j as f64 / n_points as f64;
        let z = Complex64::from_polar(1.0, theta);
        let rho = z * z * a2 + z * a1 + a0;
        let sigma = z * z * b2 + z * b1 + b0;
        if sigma.norm() <= 1e-14 * scale {
            poles.push(theta);
            continue;
        }
        points.push(BoundaryPoint {
            theta,
            lambda_k: rho / sigma,
        });
    }
    Ok(BoundaryLocus { points, poles })
}

/// Boundary of the constant-step filtered method with strength `nu`.
pub fn stability_boundary(nu: f64, n_points: usize) -> Result<BoundaryLocus> {
    if (nu - 2.0).abs() <= DEGENERATE_TOL * 2.0 {
        return Err(Error::DegenerateNu { nu, excluded: 2.0 });
    }
    boundary_locus(&lmm_coefficients(nu, 1.0)?, n_points)
}

/// `C1, C2, C3` of the three-term modified equation
/// `u' = i w u + k C1 (i w)^2 u + k^2 C2 (i w)^3 u + k^3 C3 (i w)^4 u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedEqCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub fn modified_eq_coefficients(nu: f64, tau: f64) -> Result<ModifiedEqCoefficients> {
    check_nu(nu, tau)?;
    let t = tau;
    let (t2, t3, t4, t5, t6) = (t * t, t.powi(3), t.powi(4), t.powi(5), t.powi(6));
    let n2 = nu * nu;
    let n3 = n2 * nu;
    let d = 1.0 + t - nu;
    let c1 = (t + t2 - nu - 2.0 * nu * t) / (2.0 * t * d);
    let c2 = (2.0 * t4
        + t3 * (4.0 - 5.0 * nu)
        + nu * (1.0 + 2.0 * nu)
        + t * nu * (1.0 + 6.0 * nu)
        + t2 * (2.0 - 5.0 * nu + 6.0 * n2))
        / (6.0 * t2 * d * d);
    let c3 = (6.0 * t6 + t5 * (18.0 - 20.0 * nu) - t * n2 * (31.0 + 24.0 * nu)
        + t2 * nu * (4.0 - 33.0 * nu - 36.0 * n2)
        + t4 * (18.0 - 39.0 * nu + 23.0 * n2)
        + t3 * (6.0 - 16.0 * nu + 13.0 * n2 - 24.0 * n3)
        - nu * (1.0 + 8.0 * nu + 6.0 * n2))
        / (24.0 * t3 * d * d * d);
    Ok(ModifiedEqCoefficients { c1, c2, c3 })
}

/// Relative phase error `R - 1` and amplitude error `|A| - 1` per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAmplitude {
    pub phase_err: f64,
    pub amp_err: f64,
    /// Set when `|w k| >= 1`, outside the range where the expansion is valid.
    pub domain_warning: bool,
}

/// `R - 1 = -C2 (wk)^2` and `|A| - 1 = -C1 (wk)^2 + C3 (wk)^4`.
///
/// The amplitude expression is the truncated one (it drops the `C1^2/2`
/// term of the exponential), so for `C1 != 0` it differs from the exact
/// modal amplitude at order `(wk)^4`.
pub fn phase_amplitude_error(c: &ModifiedEqCoefficients, omega_k: f64) -> PhaseAmplitude {
    let x2 = omega_k * omega_k;
    PhaseAmplitude {
        phase_err: -c.c2 * x2,
        amp_err: -c.c1 * x2 + c.c3 * x2 * x2,
        domain_warning: omega_k.abs() >= 1.0,
    }
}
