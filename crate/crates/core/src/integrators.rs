//! Fixed-grid trajectory producers and the RKF45 reference integrator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{bdf2_coefficients, lmm_coefficients, LmmCoefficients};
use crate::error::{Error, Result};
use crate::filters::{apply_variable_filter, second_order_nu, FilterParams};
use crate::ode::{implicit_euler_solve, newton_solve, Matrix, OdeProblem, SolverConfig, StateVec};

/// Time points `t[0] < t[1] < ... < t[N]`; step `n` is `t[n+1] - t[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from a start time and explicit step sizes.
    pub fn from_steps(t0: f64, steps: &[f64]) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::config("grid start must be finite"));
        }
        let mut times = Vec::with_capacity(steps.len() + 1);
        times.push(t0);
        let mut t = t0;
        for &k in steps {
            t += k;
            times.push(t);
        }
        Self::from_times(times)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::config("grid needs at least one step"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("grid times must be finite"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("grid steps must be positive"));
        }
        Ok(TimeGrid { times })
    }

    /// Constant steps `k`, with the last step shortened to land on `t_end`.
    pub fn constant(t0: f64, t_end: f64, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) || !(t_end > t0) {
            return Err(Error::config(format!(
                "bad constant grid: [{t0}, {t_end}] with k = {k}"
            )));
        }
        let span = t_end - t0;
        // absorb a trailing sliver produced by rounding of span / k
        let n = ((span / k) - 1e-9).ceil().max(1.0);
        if n > 1e8 {
            return Err(Error::config("grid would exceed 1e8 steps"));
        }
        let n = n as usize;
        let mut times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * k).collect();
        times.push(t_end);
        Self::from_times(times)
    }

    /// First step `k0`, then `k[n] = ratios[n-1] * k[n-1]`, cycling through
    /// `ratios` until `t_end` is reached; the final step is clamped.
    pub fn from_ratios(t0: f64, t_end: f64, k0: f64, ratios: &[f64]) -> Result<Self> {
        if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::config("step ratios must be positive"));
        }
        if !(k0 > 0.0 && k0.is_finite()) || !(t_end > t0) {
            return Err(Error::config(format!("bad ratio grid: [{t0}, {t_end}] with k0 = {k0}")));
        }
        let mut times = vec![t0];
        let mut k = k0;
        let mut t = t0;
        let mut i = 0;
        loop {
            if times.len() > 100_000_000 {
                return Err(Error::config("grid would exceed 1e8 steps"));
            }
            if t + k >= t_end - 1e-12 * t_end.abs().max(1.0) {
                times.push(t_end);
                break;
            }
            t += k;
            times.push(t);
            k *= ratios[i % ratios.len()];
            if !(k > 1e-12 * (t_end - t0) && k.is_finite()) {
                return Err(Error::config("step ratios drove the step size out of range"));
            }
            i += 1;
        }
        Self::from_times(times)
    }

    /// `n` steps of size `h w[i]` with `w[i]` drawn uniformly from `[1, 2]`
    /// and `h` chosen to fill `[t0, t_end]`. Every step ratio then lies in
    /// `[1/2, 2]`. Deterministic for a given seed.
    pub fn random_ratios(t0: f64, t_end: f64, n: usize, seed: u64) -> Result<Self> {
        if n == 0 || !(t_end > t0) {
            return Err(Error::config("random grid needs n >= 1 and t_end > t0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=2.0)).collect();
        let total: f64 = weights.iter().sum();
        let h = (t_end - t0) / total;
        let mut times = Vec::with_capacity(n + 1);
        times.push(t0);
        let mut acc = 0.0;
        for w in &weights[..n - 1] {
            acc += w;
            times.push(t0 + h * acc);
        }
        times.push(t_end);
        Self::from_times(times)
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn step(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    /// `k[n] / k[n-1]` for `n >= 1`.
    pub fn ratio(&self, n: usize) -> f64 {
        self.step(n) / self.step(n - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Accepted (post-filter) state.
    pub y: StateVec,
    pub y_prefilter: Option<StateVec>,
    pub k: f64,
    /// Max-norm of the filter correction, present only on filtered steps.
    pub est: Option<f64>,
    pub nu_used: Option<f64>,
}

impl StepRecord {
    fn plain(t: f64, y: StateVec, k: f64) -> Self {
        StepRecord {
            t,
            y,
            y_prefilter: None,
            k,
            est: None,
            nu_used: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    Failed { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub problem: String,
    pub method: String,
    pub t0: f64,
    pub y0: StateVec,
    pub records: Vec<StepRecord>,
    pub status: Status,
}

impl Trajectory {
    pub(crate) fn start(p: &OdeProblem, method: &str, t0: f64, y0: StateVec) -> Self {
        Trajectory {
            problem: p.name().to_string(),
            method: method.to_string(),
            t0,
            y0,
            records: Vec::new(),
            status: Status::Completed,
        }
    }

    pub(crate) fn fail(&mut self, t: f64, err: &Error) {
        self.status = Status::Failed {
            t,
            reason: err.to_string(),
        };
    }

    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(self.t0, |r| r.t)
    }

    pub fn final_state(&self) -> &StateVec {
        self.records.last().map_or(&self.y0, |r| &r.y)
    }

    /// `(t, y)` pairs including the initial point.
    pub fn points(&self) -> impl Iterator<Item = (f64, &StateVec)> + '_ {
        std::iter::once((self.t0, &self.y0)).chain(self.records.iter().map(|r| (r.t, &r.y)))
    }

    /// Linear interpolation between accepted points. `t` must lie in the
    /// covered interval.
    pub fn interpolate(&self, t: f64) -> Result<StateVec> {
        let end = self.final_time();
        if !(t >= self.t0 && t <= end) {
            return Err(Error::UnsupportedQuery(format!(
                "t = {t} outside trajectory range [{}, {end}]",
                self.t0
            )));
        }
        let idx = self.records.partition_point(|r| r.t < t);
        let (t1, y1) = (self.records[idx].t, &self.records[idx].y);
        let (ta, ya) = if idx == 0 {
            (self.t0, &self.y0)
        } else {
            (self.records[idx - 1].t, &self.records[idx - 1].y)
        };
        if t1 == ta {
            return Ok(y1.clone());
        }
        let w = (t - ta) / (t1 - ta);
        Ok(ya * (1.0 - w) + y1 * w)
    }

    /// Max over accepted points of `|y - exact(t)|_inf`.
    pub fn max_error(&self, p: &OdeProblem) -> Result<f64> {
        let mut worst = 0.0f64;
        for r in &self.records {
            worst = worst.max((&r.y - p.exact(r.t)?).amax());
        }
        Ok(worst)
    }
}

/// How the filter strength is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuPolicy {
    Fixed(f64),
    /// `nu = tau (1 + tau) / (1 + 2 tau)`, recomputed from every step ratio.
    SecondOrder,
}

impl NuPolicy {
    pub fn nu(&self, tau: f64) -> f64 {
        match *self {
            NuPolicy::Fixed(nu) => nu,
            NuPolicy::SecondOrder => second_order_nu(tau),
        }
    }

    /// Rejects a fixed `nu` that hits the excluded value `1 + tau` anywhere on the grid.
    pub fn validate_for(&self, grid: &TimeGrid) -> Result<()> {
        if let NuPolicy::Fixed(nu) = *self {
            if !nu.is_finite() {
                return Err(Error::config(format!("filter strength must be finite, got {nu}")));
            }
            for n in 1..grid.len() {
                lmm_coefficients(nu, grid.ratio(n))?;
            }
        }
        Ok(())
    }
}

fn check_initial(p: &OdeProblem, y0: &StateVec) -> Result<()> {
    if y0.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: y0.len(),
        });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("initial state must be finite"));
    }
    Ok(())
}

/// Plain backward Euler.
pub fn integrate_be(p: &OdeProblem, y0: &StateVec, grid: &TimeGrid, cfg: &SolverConfig) -> Result<Trajectory> {
    check_initial(p, y0)?;
    cfg.validate()?;
    let times = grid.times();
    let mut traj = Trajectory::start(p, "be", grid.t0(), y0.clone());
    let mut y = y0.clone();
    for n in 0..grid.len() {
        let k = grid.step(n);
        match implicit_euler_solve(p, times[n + 1], &y, k, cfg) {
            Ok(next) => y = next,
            Err(e) => {
                traj.fail(times[n], &e);
                break;
            }
        }
        traj.records.push(StepRecord::plain(times[n + 1], y.clone(), k));
    }
    Ok(traj)
}

/// Backward Euler followed by the variable-step curvature filter.
///
/// The first step has no `y[n-1]` and is plain backward Euler.
pub fn integrate_be_filtered(
    p: &OdeProblem,
    y0: &StateVec,
    grid: &TimeGrid,
    policy: NuPolicy,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_initial(p, y0)?;
    cfg.validate()?;
    policy.validate_for(grid)?;
    let times = grid.times();
    let mut traj = Trajectory::start(p, "be-filter", grid.t0(), y0.clone());
    let mut prev = y0.clone();
    let mut cur = y0.clone();
    for n in 0..grid.len() {
        let k = grid.step(n);
        let y_star = match implicit_euler_solve(p, times[n + 1], &cur, k, cfg) {
            Ok(v) => v,
            Err(e) => {
                traj.fail(times[n], &e);
                break;
            }
        };
        let record = if n == 0 {
            StepRecord::plain(times[n + 1], y_star, k)
        } else {
            let tau = grid.ratio(n);
            let nu = policy.nu(tau);
            let y = apply_variable_filter(&y_star, &cur, &prev, FilterParams { nu, tau })?;
            let est = (&y_star - &y).amax();
            StepRecord {
                t: times[n + 1],
                y,
                y_prefilter: Some(y_star),
                k,
                est: Some(est),
                nu_used: Some(nu),
            }
        };
        prev = std::mem::replace(&mut cur, record.y.clone());
        traj.records.push(record);
    }
    Ok(traj)
}

/// One step of a one-leg two-step method, solving for `y[n+1]` directly.
pub fn oneleg_step(
    p: &OdeProblem,
    c: &LmmCoefficients,
    t_next: f64,
    k: f64,
    y_n: &StateVec,
    y_nm1: &StateVec,
    cfg: &SolverConfig,
) -> Result<StateVec> {
    let [a2, a1, a0] = c.alpha;
    let [b2, b1, b0] = c.beta;
    let history_lhs = y_n * a1 + y_nm1 * a0;
    let history_arg = y_n * b1 + y_nm1 * b0;
    let identity = Matrix::identity(p.dim(), p.dim());
    newton_solve(
        |x| {
            let w = x * b2 + &history_arg;
            Ok(x * a2 + &history_lhs - p.eval(t_next, &w)? * k)
        },
        |x| {
            let w = x * b2 + &history_arg;
            Ok(&identity * a2 - p.jacobian(t_next, &w, cfg)? * (k * b2))
        },
        y_n.clone(),
        cfg,
    )
    .map_err(|e| e.at_step(t_next - k, k))
}

fn integrate_two_step<C>(
    p: &OdeProblem,
    method: &str,
    y0: &StateVec,
    y1: &StateVec,
    grid: &TimeGrid,
    cfg: &SolverConfig,
    mut coefficients: C,
) -> Result<Trajectory>
where
    C: FnMut(f64) -> Result<(LmmCoefficients, Option<f64>)>,
{
    let times = grid.times();
    let mut traj = Trajectory::start(p, method, grid.t0(), y0.clone());
    traj.records.push(StepRecord::plain(times[1], y1.clone(), grid.step(0)));
    let mut prev = y0.clone();
    let mut cur = y1.clone();
    for n in 1..grid.len() {
        let k = grid.step(n);
        let (c, nu) = coefficients(grid.ratio(n))?;
        let y = match oneleg_step(p, &c, times[n + 1], k, &cur, &prev, cfg) {
            Ok(v) => v,
            Err(e) => {
                traj.fail(times[n], &e);
                break;
            }
        };
        traj.records.push(StepRecord {
            t: times[n + 1],
            y: y.clone(),
            y_prefilter: None,
            k,
            est: None,
            nu_used: nu,
        });
        prev = std::mem::replace(&mut cur, y);
    }
    Ok(traj)
}

/// The filtered method in its equivalent one-leg form, started from two
/// supplied values `y0` (at `t[0]`) and `y1` (at `t[1]`).
pub fn integrate_oneleg_lmm(
    p: &OdeProblem,
    y0: &StateVec,
    y1: &StateVec,
    grid: &TimeGrid,
    policy: NuPolicy,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_initial(p, y0)?;
    check_initial(p, y1)?;
    cfg.validate()?;
    policy.validate_for(grid)?;
    integrate_two_step(p, "oneleg", y0, y1, grid, cfg, |tau| {
        let nu = policy.nu(tau);
        Ok((lmm_coefficients(nu, tau)?, Some(nu)))
    })
}

/// One-leg form with the first step taken by backward Euler.
pub fn integrate_oneleg_be_start(
    p: &OdeProblem,
    y0: &StateVec,
    grid: &TimeGrid,
    policy: NuPolicy,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_initial(p, y0)?;
    let y1 = implicit_euler_solve(p, grid.times()[1], y0, grid.step(0), cfg);
    match y1 {
        Ok(y1) => integrate_oneleg_lmm(p, y0, &y1, grid, policy, cfg),
        Err(e) => {
            let mut traj = Trajectory::start(p, "oneleg", grid.t0(), y0.clone());
            traj.fail(grid.t0(), &e);
            Ok(traj)
        }
    }
}

/// Variable-step BDF2 with a backward Euler startup step.
pub fn integrate_bdf2(p: &OdeProblem, y0: &StateVec, grid: &TimeGrid, cfg: &SolverConfig) -> Result<Trajectory> {
    check_initial(p, y0)?;
    cfg.validate()?;
    let y1 = match implicit_euler_solve(p, grid.times()[1], y0, grid.step(0), cfg) {
        Ok(v) => v,
        Err(e) => {
            let mut traj = Trajectory::start(p, "bdf2", grid.t0(), y0.clone());
            traj.fail(grid.t0(), &e);
            return Ok(traj);
        }
    };
    integrate_two_step(p, "bdf2", y0, &y1, grid, cfg, |tau| Ok((bdf2_coefficients(tau), None)))
}

/// Settings for the RKF45 reference integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkfConfig {
    /// Absolute max-norm tolerance on the embedded error estimate.
    pub tol: f64,
    /// First trial step; defaults to the whole span.
    pub k_init: Option<f64>,
    pub k_min: f64,
    pub k_max: Option<f64>,
    pub max_steps: usize,
}

impl RkfConfig {
    pub fn new(tol: f64) -> Self {
        RkfConfig {
            tol,
            k_init: None,
            k_min: 1e-14,
            k_max: None,
            max_steps: 10_000_000,
        }
    }
}

// Fehlberg 4(5) tableau.
const RKF_C: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
const RKF_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const RKF_B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const RKF_B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

/// One Fehlberg step: returns the fifth-order solution and the max-norm of
/// its difference from the embedded fourth-order one.
fn rkf_step(p: &OdeProblem, t: f64, y: &StateVec, h: f64) -> Result<(StateVec, f64)> {
    let mut stages: Vec<StateVec> = Vec::with_capacity(6);
    for i in 0..6 {
        let mut yi = y.clone();
        for (j, kj) in stages.iter().enumerate() {
            if RKF_A[i][j] != 0.0 {
                yi += kj * (h * RKF_A[i][j]);
            }
        }
        stages.push(p.eval(t + RKF_C[i] * h, &yi)?);
    }
    let mut y5 = y.clone();
    let mut diff = StateVec::zeros(y.len());
    for i in 0..6 {
        y5 += &stages[i] * (h * RKF_B5[i]);
        diff += &stages[i] * (h * (RKF_B5[i] - RKF_B4[i]));
    }
    Ok((y5, diff.amax()))
}

/// Adaptive Runge-Kutta-Fehlberg 4(5); every accepted step has an error
/// estimate at most `tol`. The fifth-order solution is propagated.
pub fn integrate_rkf45(p: &OdeProblem, y0: &StateVec, t_span: (f64, f64), tol: f64) -> Result<Trajectory> {
    integrate_rkf45_with(p, y0, t_span, &RkfConfig::new(tol))
}

pub fn integrate_rkf45_with(p: &OdeProblem, y0: &StateVec, t_span: (f64, f64), rc: &RkfConfig) -> Result<Trajectory> {
    check_initial(p, y0)?;
    let (t0, t_end) = t_span;
    if !(rc.tol > 0.0 && rc.tol.is_finite()) {
        return Err(Error::config("RKF45 tolerance must be positive"));
    }
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::config("RKF45 needs a finite span with t_end > t0"));
    }
    let span = t_end - t0;
    let k_max = rc.k_max.unwrap_or(span).min(span);
    let mut h = rc.k_init.unwrap_or(span).min(k_max);
    let mut traj = Trajectory::start(p, "rkf45", t0, y0.clone());
    let mut t = t0;
    let mut y = y0.clone();
    let mut steps = 0;
    let end_tol = 1e-12 * t_end.abs().max(1.0);
    while t < t_end - end_tol {
        if steps >= rc.max_steps {
            traj.fail(t, &Error::config("RKF45 step budget exhausted"));
            break;
        }
        let last = t + h >= t_end - end_tol;
        let h_try = if last { t_end - t } else { h };
        let (y_new, err) = match rkf_step(p, t, &y, h_try) {
            Ok(v) => v,
            Err(e) => {
                traj.fail(t, &e);
                break;
            }
        };
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (rc.tol / err).powf(0.2)).clamp(0.1, 5.0)
        };
        if err <= rc.tol {
            t = if last { t_end } else { t + h_try };
            y = y_new;
            traj.records.push(StepRecord::plain(t, y.clone(), h_try));
            steps += 1;
            h = (h_try * factor).min(k_max);
        } else {
            h = h_try * factor;
            if h < rc.k_min {
                traj.fail(t, &Error::config(format!("RKF45 step size underflow (h = {h:e})")));
                break;
            }
        }
    }
    Ok(traj)
}
