//! Filter-difference estimator and the halving/doubling step controller.

use crate::error::{Error, Result};
use crate::filters::{apply_variable_filter, second_order_nu, FilterParams};
use crate::integrators::{StepRecord, Trajectory};
use crate::ode::{implicit_euler_solve, OdeProblem, SolverConfig, StateVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub tol: f64,
    pub k_init: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub max_rejections_per_step: usize,
}

impl AdaptiveConfig {
    /// `k_min = 1e-10 * k_init`, `k_max = 1e3 * k_init`.
    pub fn new(tol: f64, k_init: f64) -> Self {
        AdaptiveConfig {
            tol,
            k_init,
            k_min: k_init * 1e-10,
            k_max: k_init * 1e3,
            max_rejections_per_step: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.tol) {
            return Err(Error::config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(pos(self.k_min) && pos(self.k_init) && pos(self.k_max)) {
            return Err(Error::config("adaptive step bounds must be positive and finite"));
        }
        if !(self.k_min <= self.k_init && self.k_init <= self.k_max) {
            return Err(Error::config(format!(
                "need k_min <= k_init <= k_max, got {} / {} / {}",
                self.k_min, self.k_init, self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDecision {
    RejectHalve,
    AcceptDouble,
    AcceptKeep,
}

impl StepDecision {
    pub fn accepted(self) -> bool {
        self != StepDecision::RejectHalve
    }
}

/// Max-norm of the pre/post filter difference.
pub fn error_estimate(pre: &StateVec, post: &StateVec) -> Result<f64> {
    if pre.len() != post.len() {
        return Err(Error::DimensionMismatch {
            expected: pre.len(),
            found: post.len(),
        });
    }
    Ok((pre - post).amax())
}

pub fn adapt_decision(est: f64, tol: f64) -> StepDecision {
    if est >= tol {
        StepDecision::RejectHalve
    } else if est <= tol / 8.0 {
        StepDecision::AcceptDouble
    } else {
        StepDecision::AcceptKeep
    }
}

struct Attempt {
    decision: StepDecision,
    y_star: StateVec,
    y: StateVec,
    est: f64,
    nu: f64,
}

/// One BE+filter attempt. `Ok(None)` means the attempt failed numerically
/// and is treated as a rejection.
#[allow(clippy::too_many_arguments)]
fn attempt(
    p: &OdeProblem,
    t: f64,
    k: f64,
    k_prev: f64,
    y_cur: &StateVec,
    y_prev: &StateVec,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<Option<Attempt>> {
    let tau = k / k_prev;
    let nu = second_order_nu(tau);
    let y_star = match implicit_euler_solve(p, t + k, y_cur, k, cfg) {
        Ok(v) => v,
        Err(e @ (Error::InvalidConfig(_) | Error::DimensionMismatch { .. })) => return Err(e),
        Err(_) => return Ok(None),
    };
    let y = apply_variable_filter(&y_star, y_cur, y_prev, FilterParams { nu, tau })?;
    let est = (&y_star - &y).amax();
    if !est.is_finite() {
        return Ok(None);
    }
    Ok(Some(Attempt {
        decision: adapt_decision(est, tol),
        y_star,
        y,
        est,
        nu,
    }))
}

fn filtered_record(t: f64, k: f64, a: &Attempt) -> StepRecord {
    StepRecord {
        t,
        y: a.y.clone(),
        y_prefilter: Some(a.y_star.clone()),
        k,
        est: Some(a.est),
        nu_used: Some(a.nu),
    }
}

/// Adaptive BE plus filter. Every attempt recomputes `nu` from the current
/// step ratio; a rejected attempt halves `k[n]` and leaves history alone. A
/// Newton failure on an attempt counts as a rejection.
///
/// The startup step is plain BE. It has no estimate of its own and is
/// committed together with the first filtered step; when that step is
/// rejected both halve and are recomputed from `y0`.
pub fn integrate_adaptive(
    p: &OdeProblem,
    y0: &StateVec,
    t_span: (f64, f64),
    acfg: &AdaptiveConfig,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    acfg.validate()?;
    cfg.validate()?;
    let (t0, t_end) = t_span;
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::config("adaptive run needs a finite span with t_end > t0"));
    }
    if y0.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: y0.len(),
        });
    }
    let tol = acfg.tol;
    let mut traj = Trajectory::start(p, "adaptive", t0, y0.clone());
    let snap = 1e-12 * t_end.abs().max(1.0);
    let clamp_final = |t: f64, k: f64| if t + k >= t_end - snap { t_end - t } else { k };
    let advance = |t: f64, k: f64| if t + k >= t_end - snap { t_end } else { t + k };
    let fail_reason = |rejections: usize, k: f64| {
        if rejections > acfg.max_rejections_per_step {
            Some(Error::config(format!(
                "step rejected more than {} times",
                acfg.max_rejections_per_step
            )))
        } else if k < acfg.k_min {
            Some(Error::config(format!(
                "step size {k:e} fell below k_min = {:e}",
                acfg.k_min
            )))
        } else {
            None
        }
    };

    // startup pair
    let mut k0 = clamp_final(t0, acfg.k_init);
    let mut rejections = 0usize;
    let (mut t, mut y_prev, mut y_cur, mut k_prev, mut k_next) = loop {
        let t1 = advance(t0, k0);
        let y1 = implicit_euler_solve(p, t1, y0, k0, cfg);
        let outcome = match y1 {
            Ok(y1) if t1 == t_end => {
                traj.records.push(StepRecord {
                    t: t1,
                    y: y1,
                    y_prefilter: None,
                    k: k0,
                    est: None,
                    nu_used: None,
                });
                return Ok(traj);
            }
            Ok(y1) => {
                let k1 = clamp_final(t1, k0);
                attempt(p, t1, k1, k0, &y1, y0, tol, cfg)?
                    .filter(|a| a.decision.accepted())
                    .map(|a| (y1, k1, a))
            }
            Err(Error::InvalidConfig(m)) => return Err(Error::InvalidConfig(m)),
            Err(_) => None,
        };
        if let Some((y1, k1, a)) = outcome {
            let t1 = advance(t0, k0);
            let t2 = advance(t1, k1);
            traj.records.push(StepRecord {
                t: t1,
                y: y1.clone(),
                y_prefilter: None,
                k: k0,
                est: None,
                nu_used: None,
            });
            traj.records.push(filtered_record(t2, k1, &a));
            let next = if a.decision == StepDecision::AcceptDouble {
                2.0 * k1
            } else {
                k1
            };
            break (t2, y1, a.y, k1, next.clamp(acfg.k_min, acfg.k_max));
        }
        rejections += 1;
        k0 *= 0.5;
        if let Some(e) = fail_reason(rejections, k0) {
            traj.fail(t0, &e);
            return Ok(traj);
        }
    };

    while t < t_end {
        let mut k = clamp_final(t, k_next);
        let mut rejections = 0usize;
        let accepted = loop {
            if let Some(a) = attempt(p, t, k, k_prev, &y_cur, &y_prev, tol, cfg)? {
                if a.decision.accepted() {
                    break Some(a);
                }
            }
            rejections += 1;
            k *= 0.5;
            if let Some(e) = fail_reason(rejections, k) {
                traj.fail(t, &e);
                break None;
            }
        };
        let Some(a) = accepted else {
            break;
        };
        let t_new = advance(t, k);
        traj.records.push(filtered_record(t_new, k, &a));
        k_next = match a.decision {
            StepDecision::AcceptDouble => 2.0 * k,
            _ => k,
        }
        .clamp(acfg.k_min, acfg.k_max);
        y_prev = std::mem::replace(&mut y_cur, a.y);
        t = t_new;
        k_prev = k;
    }
    Ok(traj)
}
