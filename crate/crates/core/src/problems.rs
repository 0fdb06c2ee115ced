//! Benchmark initial value problems.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ode::{Matrix, OdeProblem, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Lorenz,
    Pendulum,
    Quasiperiodic,
    Sussman,
    Dahlquist,
    LinearForced,
    Oscillation,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 7] = [
        ProblemKind::Lorenz,
        ProblemKind::Pendulum,
        ProblemKind::Quasiperiodic,
        ProblemKind::Sussman,
        ProblemKind::Dahlquist,
        ProblemKind::LinearForced,
        ProblemKind::Oscillation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Lorenz => "lorenz",
            ProblemKind::Pendulum => "pendulum",
            ProblemKind::Quasiperiodic => "quasiperiodic",
            ProblemKind::Sussman => "sussman",
            ProblemKind::Dahlquist => "dahlquist",
            ProblemKind::LinearForced => "linear-forced",
            ProblemKind::Oscillation => "oscillation",
        }
    }

    /// Parameter names and default values.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            ProblemKind::Lorenz => &[("sigma", 12.0), ("r", 12.0), ("b", 6.0)],
            ProblemKind::Pendulum => &[("g", 9.8), ("L", 49.0)],
            ProblemKind::Dahlquist => &[("lambda", -1.0)],
            ProblemKind::Oscillation => &[("omega", 1.0)],
            ProblemKind::Quasiperiodic | ProblemKind::Sussman | ProblemKind::LinearForced => &[],
        }
    }

    pub fn default_y0(self) -> Vec<f64> {
        match self {
            ProblemKind::Lorenz => vec![-10.0, -10.0, 25.0],
            ProblemKind::Pendulum => vec![0.9 * PI, 0.0],
            ProblemKind::Quasiperiodic => vec![2.0, 0.0, -(1.0 + PI * PI), 0.0],
            ProblemKind::Sussman => vec![0.0, 0.0],
            ProblemKind::Dahlquist | ProblemKind::LinearForced => vec![1.0],
            ProblemKind::Oscillation => vec![1.0, 0.0],
        }
    }

    pub fn default_span(self) -> (f64, f64) {
        match self {
            ProblemKind::Lorenz => (0.0, 5.0),
            ProblemKind::Pendulum => (0.0, 60.0),
            ProblemKind::Quasiperiodic | ProblemKind::Sussman => (0.0, 20.0),
            ProblemKind::Dahlquist | ProblemKind::Oscillation => (0.0, 1.0),
            ProblemKind::LinearForced => (0.0, 2.0),
        }
    }

    pub fn dim(self) -> usize {
        self.default_y0().len()
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub params: BTreeMap<String, f64>,
    pub y0: StateVec,
    pub t_span: (f64, f64),
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        ProblemSpec {
            kind,
            params: kind.default_params().iter().map(|&(n, v)| (n.to_string(), v)).collect(),
            y0: StateVec::from_vec(kind.default_y0()),
            t_span: kind.default_span(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Result<Self> {
        self.set_param(name, value)?;
        Ok(self)
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        if !self.params.contains_key(name) {
            let known: Vec<&str> = self.kind.default_params().iter().map(|p| p.0).collect();
            return Err(self.bad(format!("unknown parameter `{name}` (known: {known:?})")));
        }
        if !value.is_finite() {
            return Err(self.bad(format!("parameter `{name}` must be finite")));
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    pub fn with_y0(mut self, y0: Vec<f64>) -> Self {
        self.y0 = StateVec::from_vec(y0);
        self
    }

    pub fn with_span(mut self, t0: f64, t_end: f64) -> Self {
        self.t_span = (t0, t_end);
        self
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    fn bad(&self, reason: String) -> Error {
        Error::BadParameter {
            problem: self.kind.name().to_string(),
            reason,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in &self.params {
            if !self.kind.default_params().iter().any(|p| p.0 == name) {
                return Err(self.bad(format!("unknown parameter `{name}`")));
            }
            if !v.is_finite() {
                return Err(self.bad(format!("parameter `{name}` must be finite")));
            }
        }
        if self.y0.len() != self.kind.dim() {
            return Err(self.bad(format!(
                "initial state has {} components, expected {}",
                self.y0.len(),
                self.kind.dim()
            )));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(self.bad("initial state must be finite".into()));
        }
        let (t0, t1) = self.t_span;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(self.bad(format!("time span [{t0}, {t1}] is not increasing")));
        }
        if self.kind == ProblemKind::Pendulum && self.param("L") == 0.0 {
            return Err(self.bad("pendulum length must be nonzero".into()));
        }
        Ok(())
    }
}

/// Builds the problem; exact solutions are attached for the linear problems
/// and are anchored at `spec.y0` and `spec.t_span.0`.
pub fn make_problem(spec: &ProblemSpec) -> Result<OdeProblem> {
    spec.validate()?;
    let t0 = spec.t_span.0;
    let y0 = spec.y0.clone();
    let p = match spec.kind {
        ProblemKind::Lorenz => {
            let (s, r, b) = (spec.param("sigma"), spec.param("r"), spec.param("b"));
            OdeProblem::new("lorenz", 3, move |_, u| {
                let (x, y, z) = (u[0], u[1], u[2]);
                StateVec::from_vec(vec![s * (y - x), -x * z + r * x - y, x * y - b * z])
            })
            .with_jacobian(move |_, u| {
                let (x, y, z) = (u[0], u[1], u[2]);
                Matrix::from_row_slice(3, 3, &[-s, s, 0.0, r - z, -1.0, -x, y, x, -b])
            })
            .with_components(["X", "Y", "Z"])
        }
        ProblemKind::Pendulum => {
            let (g, l) = (spec.param("g"), spec.param("L"));
            OdeProblem::new("pendulum", 2, move |_, u| {
                StateVec::from_vec(vec![u[1] / l, -g * u[0].sin()])
            })
            .with_jacobian(move |_, u| Matrix::from_row_slice(2, 2, &[0.0, 1.0 / l, -g * u[0].cos(), 0.0]))
            .with_components(["theta", "v"])
        }
        ProblemKind::Quasiperiodic => {
            let a = quasiperiodic_coefficients(&y0, t0)?;
            let q = PI * PI;
            let jac = Matrix::from_row_slice(
                4,
                4,
                &[
                    0.0,
                    1.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                    -q,
                    0.0,
                    -(1.0 + q),
                    0.0,
                ],
            );
            OdeProblem::new("quasiperiodic", 4, move |_, u| {
                StateVec::from_vec(vec![u[1], u[2], u[3], -(1.0 + q) * u[2] - q * u[0]])
            })
            .with_jacobian(move |_, _| jac.clone())
            .with_exact(move |t| quasiperiodic_exact(&a, t))
            .with_components(["x", "dx", "d2x", "d3x"])
        }
        ProblemKind::Sussman => OdeProblem::new("sussman", 2, |_, u| {
            StateVec::from_vec(vec![1.0 - u[1] * u[1] - u[0], 1.0 + u[1] * u[0] - u[1]])
        })
        .with_jacobian(|_, u| Matrix::from_row_slice(2, 2, &[-1.0, -2.0 * u[1], u[1], u[0] - 1.0]))
        .with_components(["u1", "u2"]),
        ProblemKind::Dahlquist => {
            let lambda = spec.param("lambda");
            let c = y0[0];
            OdeProblem::new("dahlquist", 1, move |_, y| y * lambda)
                .with_jacobian(move |_, _| Matrix::from_element(1, 1, lambda))
                .with_exact(move |t| StateVec::from_element(1, c * (lambda * (t - t0)).exp()))
        }
        ProblemKind::LinearForced => {
            // y = C e^{-t} + (sin t - cos t) / 2
            let c = (y0[0] - (t0.sin() - t0.cos()) / 2.0) * t0.exp();
            OdeProblem::new("linear-forced", 1, |t, y| y.map(|v| -v + t.sin()))
                .with_jacobian(|_, _| Matrix::from_element(1, 1, -1.0))
                .with_exact(move |t| StateVec::from_element(1, c * (-t).exp() + (t.sin() - t.cos()) / 2.0))
        }
        ProblemKind::Oscillation => {
            let w = spec.param("omega");
            let (u0, v0) = (y0[0], y0[1]);
            OdeProblem::new("oscillation", 2, move |_, u| {
                StateVec::from_vec(vec![-w * u[1], w * u[0]])
            })
            .with_jacobian(move |_, _| Matrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]))
            .with_exact(move |t| {
                let (c, s) = ((w * (t - t0)).cos(), (w * (t - t0)).sin());
                StateVec::from_vec(vec![c * u0 - s * v0, s * u0 + c * v0])
            })
            .with_components(["u", "v"])
        }
    };
    Ok(p)
}

/// Coefficients `(a, b, c, d)` of `x = a cos t + b sin t + c cos(pi t) + d sin(pi t)`
/// matching the companion state `y0` at `t0`.
fn quasiperiodic_coefficients(y0: &StateVec, t0: f64) -> Result<[f64; 4]> {
    let mut m = Matrix::zeros(4, 4);
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let row = quasiperiodic_exact(&e, t0);
        m.set_column(j, &row);
    }
    let sol = m
        .lu()
        .solve(y0)
        .ok_or_else(|| Error::config("quasiperiodic basis matrix is singular"))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

fn quasiperiodic_exact(a: &[f64; 4], t: f64) -> StateVec {
    let (c1, s1) = (t.cos(), t.sin());
    let (cp, sp) = ((PI * t).cos(), (PI * t).sin());
    let mut out = StateVec::zeros(4);
    // derivatives 0..3 of cos, sin at frequency w: w^d times a rotation
    for d in 0..4 {
        let slow = rot(d, c1, s1);
        let fast = rot(d, cp, sp);
        let pd = PI.powi(d as i32);
        out[d] = a[0] * slow.0 + a[1] * slow.1 + pd * (a[2] * fast.0 + a[3] * fast.1);
    }
    out
}

/// d-th derivative pattern of (cos, sin) divided by the frequency power.
fn rot(d: usize, c: f64, s: f64) -> (f64, f64) {
    match d % 4 {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    }
}

pub fn exact_solution(p: &OdeProblem, t: f64) -> Result<StateVec> {
    p.exact(t)
}
