//! Problem abstraction and the Newton solver behind every implicit step.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A solution state. Entries must stay finite; a NaN or infinity is
/// reported as an evaluation failure.
pub type StateVec = DVector<f64>;

/// Dense `dim x dim` matrix used for Jacobians.
pub type Matrix = DMatrix<f64>;

pub type RhsFn = Arc<dyn Fn(f64, &StateVec) -> StateVec + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64) -> StateVec + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &StateVec) -> Matrix + Send + Sync>;

/// An initial value problem `y' = f(t, y)`.
///
/// Cloning is cheap: the closures are shared.
#[derive(Clone)]
pub struct OdeProblem {
    name: String,
    dim: usize,
    rhs: RhsFn,
    exact: Option<ExactFn>,
    jacobian: Option<JacobianFn>,
    components: Vec<String>,
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("exact", &self.exact.is_some())
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl OdeProblem {
    pub fn new<F>(name: impl Into<String>, dim: usize, rhs: F) -> Self
    where
        F: Fn(f64, &StateVec) -> StateVec + Send + Sync + 'static,
    {
        assert!(dim > 0, "problem dimension must be positive");
        let components = if dim == 1 {
            vec!["y".to_string()]
        } else {
            (1..=dim).map(|i| format!("y{i}")).collect()
        };
        OdeProblem {
            name: name.into(),
            dim,
            rhs: Arc::new(rhs),
            exact: None,
            jacobian: None,
            components,
        }
    }

    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(f64) -> StateVec + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(f64, &StateVec) -> Matrix + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Names used for the state columns of output files.
    pub fn with_components<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        assert_eq!(names.len(), self.dim, "one component name per dimension");
        self.components = names;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluates `f(t, y)`, checking the input and output for length and finiteness.
    pub fn eval(&self, t: f64, y: &StateVec) -> Result<StateVec> {
        check_dim(self.dim, y)?;
        check_finite(t, y)?;
        let out = (self.rhs)(t, y);
        check_dim(self.dim, &out)?;
        if !t.is_finite() || out.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure {
                t,
                y: y.iter().copied().collect(),
            });
        }
        Ok(out)
    }

    /// The analytic Jacobian when present, otherwise a forward-difference one.
    pub fn jacobian(&self, t: f64, y: &StateVec, cfg: &SolverConfig) -> Result<Matrix> {
        match &self.jacobian {
            Some(jac) => {
                check_dim(self.dim, y)?;
                check_finite(t, y)?;
                let m = jac(t, y);
                if m.nrows() != self.dim || m.ncols() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::EvaluationFailure {
                        t,
                        y: y.iter().copied().collect(),
                    });
                }
                Ok(m)
            }
            None => fd_jacobian(|t, y| self.eval(t, y), t, y, cfg),
        }
    }

    pub fn exact(&self, t: f64) -> Result<StateVec> {
        match &self.exact {
            Some(exact) => Ok(exact(t)),
            None => Err(Error::UnsupportedQuery(format!(
                "problem `{}` has no exact solution",
                self.name
            ))),
        }
    }

    /// Checks `f(t, exact(t)) = d/dt exact(t)` with central differences at the
    /// given times. Returns the worst mismatch relative to `max(1, |y'|)`.
    pub fn check_exact_consistency(&self, times: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &t in times {
            let h = 1e-5 * t.abs().max(1.0);
            let fd = (self.exact(t + h)? - self.exact(t - h)?) / (2.0 * h);
            let f = self.eval(t, &self.exact(t)?)?;
            let scale = f.amax().max(1.0);
            worst = worst.max((fd - f).amax() / scale);
        }
        Ok(worst)
    }
}

fn check_dim(expected: usize, y: &StateVec) -> Result<()> {
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: y.len(),
        });
    }
    Ok(())
}

fn check_finite(t: f64, y: &StateVec) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure {
            t,
            y: y.iter().copied().collect(),
        })
    }
}

/// Newton and finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub newton_abs_tol: f64,
    pub newton_rel_tol: f64,
    pub newton_max_iters: usize,
    pub fd_epsilon_scale: f64,
    /// Evaluate the Jacobian once per solve instead of every iteration.
    pub freeze_jacobian: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_abs_tol: 1e-12,
            newton_rel_tol: 1e-12,
            newton_max_iters: 25,
            fd_epsilon_scale: f64::EPSILON.sqrt(),
            freeze_jacobian: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.newton_abs_tol) || !positive(self.newton_rel_tol) {
            return Err(Error::config("Newton tolerances must be positive"));
        }
        if !positive(self.fd_epsilon_scale) {
            return Err(Error::config("finite-difference epsilon scale must be positive"));
        }
        if self.newton_max_iters == 0 {
            return Err(Error::config("newton_max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Forward-difference Jacobian of `f` at `(t, y)`.
///
/// Column `j` perturbs `y[j]` by `fd_epsilon_scale * max(1, |y[j]|)`.
pub fn fd_jacobian<F>(f: F, t: f64, y: &StateVec, cfg: &SolverConfig) -> Result<Matrix>
where
    F: Fn(f64, &StateVec) -> Result<StateVec>,
{
    check_finite(t, y)?;
    let f0 = f(t, y)?;
    let n = y.len();
    let mut jac = Matrix::zeros(f0.len(), n);
    let mut yp = y.clone();
    for j in 0..n {
        let eps = cfg.fd_epsilon_scale * y[j].abs().max(1.0);
        yp[j] = y[j] + eps;
        // the realized increment, which differs from eps by rounding
        let h = yp[j] - y[j];
        let fj = f(t, &yp)?;
        jac.set_column(j, &((fj - &f0) / h));
        yp[j] = y[j];
    }
    Ok(jac)
}

/// Newton's method with a full linear solve each pass.
///
/// Stops as soon as `|r(x)|_inf <= abs_tol + rel_tol * |x|_inf`.
pub fn newton_solve<R, J>(residual: R, jac: J, guess: StateVec, cfg: &SolverConfig) -> Result<StateVec>
where
    R: FnMut(&StateVec) -> Result<StateVec>,
    J: FnMut(&StateVec) -> Result<Matrix>,
{
    newton_iterate(residual, jac, guess, cfg).map(|(x, _)| x)
}

/// Like [`newton_solve`], also returning the number of linear solves performed.
pub fn newton_iterate<R, J>(
    mut residual: R,
    mut jac: J,
    guess: StateVec,
    cfg: &SolverConfig,
) -> Result<(StateVec, usize)>
where
    R: FnMut(&StateVec) -> Result<StateVec>,
    J: FnMut(&StateVec) -> Result<Matrix>,
{
    let mut x = guess;
    let mut frozen: Option<Matrix> = None;
    let mut iterations = 0;
    loop {
        let r = residual(&x)?;
        if r.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: r.len(),
            });
        }
        let rnorm = r.amax();
        if !rnorm.is_finite() {
            return Err(Error::EvaluationFailure {
                t: f64::NAN,
                y: x.iter().copied().collect(),
            });
        }
        if rnorm <= cfg.newton_abs_tol + cfg.newton_rel_tol * x.amax() {
            return Ok((x, iterations));
        }
        if iterations >= cfg.newton_max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual_norm: rnorm,
                last_iterate: x.iter().copied().collect(),
            });
        }
        let j = match (&frozen, cfg.freeze_jacobian) {
            (Some(j), true) => j.clone(),
            _ => {
                let j = jac(&x)?;
                if j.nrows() != x.len() || j.ncols() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        found: j.nrows(),
                    });
                }
                if cfg.freeze_jacobian {
                    frozen = Some(j.clone());
                }
                j
            }
        };
        let dx = j.lu().solve(&(-r)).ok_or(Error::SingularJacobian)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        x += dx;
        iterations += 1;
    }
}

/// Solves the backward Euler equation `y = y_n + k f(t_next, y)`, starting
/// Newton from `y_n`.
pub fn implicit_euler_solve(
    p: &OdeProblem,
    t_next: f64,
    y_n: &StateVec,
    k: f64,
    cfg: &SolverConfig,
) -> Result<StateVec> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::config(format!("step size must be positive, got {k}")));
    }
    check_dim(p.dim(), y_n)?;
    let identity = Matrix::identity(p.dim(), p.dim());
    newton_solve(
        |x| Ok(x - y_n - p.eval(t_next, x)? * k),
        |x| Ok(&identity - p.jacobian(t_next, x, cfg)? * k),
        y_n.clone(),
        cfg,
    )
    .map_err(|e| e.at_step(t_next - k, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> StateVec {
        StateVec::from_element(1, v)
    }

    #[test]
    fn fd_jacobian_of_linear_map() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let a2 = a.clone();
        let jac = fd_jacobian(
            |_, y| Ok(&a2 * y),
            0.0,
            &StateVec::from_vec(vec![0.3, -1.7]),
            &SolverConfig::default(),
        )
        .unwrap();
        for (got, want) in jac.iter().zip(a.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn fd_jacobian_of_square() {
        let jac = fd_jacobian(|_, y| Ok(y.map(|v| v * v)), 0.0, &scalar(3.0), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(jac[(0, 0)], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_jacobian_of_constant_is_zero() {
        let jac = fd_jacobian(
            |_, _y| Ok(StateVec::from_vec(vec![4.0, -1.0])),
            0.0,
            &StateVec::from_vec(vec![1.0, 2.0]),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(jac.iter().all(|v| v.abs() <= f64::EPSILON));
    }

    #[test]
    fn fd_jacobian_reports_non_finite_rhs() {
        let err = fd_jacobian(
            |t, y: &StateVec| {
                if y[0] > 1.0 {
                    Err(Error::EvaluationFailure { t, y: vec![y[0]] })
                } else {
                    Ok(y.clone())
                }
            },
            0.5,
            &scalar(1.0),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EvaluationFailure { t, .. } if t == 0.5));
    }

    #[test]
    fn newton_affine_converges_in_one_iteration() {
        let (x, iters) = newton_iterate(
            |x| Ok(x.map(|v| v - 2.0)),
            |_| Ok(Matrix::identity(1, 1)),
            scalar(0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(iters, 1);
        assert_eq!(x[0], 2.0);
    }

    #[test]
    fn newton_finds_known_root() {
        let x = newton_solve(
            |x| Ok(x.map(|v| v * v - 4.0)),
            |x| Ok(Matrix::from_element(1, 1, 2.0 * x[0])),
            scalar(3.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn newton_without_real_root_fails() {
        let err = newton_solve(
            |x| Ok(x.map(|v| v * v + 1.0)),
            |x| Ok(Matrix::from_element(1, 1, 2.0 * x[0])),
            scalar(1.0),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NoConvergence { iterations: 25, .. } | Error::SingularJacobian
        ));
    }

    #[test]
    fn newton_singular_jacobian() {
        let err = newton_solve(
            |x| Ok(x.map(|v| v - 1.0)),
            |_| Ok(Matrix::zeros(1, 1)),
            scalar(0.0),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::SingularJacobian);
    }

    #[test]
    fn frozen_jacobian_still_converges() {
        let cfg = SolverConfig {
            freeze_jacobian: true,
            newton_max_iters: 60,
            ..SolverConfig::default()
        };
        let x = newton_solve(
            |x| Ok(x.map(|v| v * v - 4.0)),
            |x| Ok(Matrix::from_element(1, 1, 2.0 * x[0])),
            scalar(3.0),
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-11);
    }

    fn linear(lambda: f64) -> OdeProblem {
        OdeProblem::new("lin", 1, move |_, y| y * lambda)
    }

    #[test]
    fn implicit_euler_closed_forms() {
        let cfg = SolverConfig::default();
        let y = implicit_euler_solve(&linear(-1.0), 1.0, &scalar(1.0), 1.0, &cfg).unwrap();
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-14);
        let y = implicit_euler_solve(&linear(-2.0), 0.5, &scalar(1.0), 0.5, &cfg).unwrap();
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-14);
        let zero = OdeProblem::new("zero", 1, |_, y| y * 0.0);
        let y = implicit_euler_solve(&zero, 0.3, &scalar(1.25), 0.3, &cfg).unwrap();
        assert_eq!(y[0], 1.25);
    }

    #[test]
    fn implicit_euler_rejects_bad_step() {
        let err = implicit_euler_solve(&linear(-1.0), 1.0, &scalar(1.0), 0.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn newton_failure_carries_step_context() {
        // y' = y^2 + 1 blows up; a huge step leaves no real solution to BE
        let p = OdeProblem::new("riccati", 1, |_, y| y.map(|v| v * v + 1.0));
        let err = implicit_euler_solve(&p, 10.0, &scalar(0.0), 10.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::StepFailure { k, .. } if k == 10.0));
    }

    #[test]
    fn nan_state_is_an_evaluation_failure() {
        let p = linear(-1.0);
        let err = p.eval(0.0, &scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::EvaluationFailure { .. }));
        let bad = OdeProblem::new("bad", 1, |_, y| y.map(|v| v / 0.0));
        assert!(matches!(
            bad.eval(0.0, &scalar(1.0)),
            Err(Error::EvaluationFailure { .. })
        ));
    }

    #[test]
    fn wrong_rhs_length_is_reported() {
        let p = OdeProblem::new("short", 2, |_, _| StateVec::zeros(1));
        let err = p.eval(0.0, &StateVec::zeros(2)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn missing_exact_is_unsupported() {
        assert!(matches!(linear(-1.0).exact(1.0), Err(Error::UnsupportedQuery(_))));
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            newton_max_iters: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            newton_abs_tol: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
