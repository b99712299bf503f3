//! Benchmark problems with known behaviour.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::integrate_view;
use crate::stepper::{CoupledRhs, Dynamics, Problem, Rhs, TimeFn};

pub const PROBLEM_NAMES: [&str; 3] = ["belzen", "quadratic_re", "daphnia"];

/// `x'(t) = lambda x(t) - (pi/2) e^lambda x(t-1)` with exact solution
/// `e^{lambda t} sin(pi t / 2)`, used as initial data as well.
pub fn belzen(lambda: f64) -> Problem {
    let exact: TimeFn = Arc::new(move |t| vec![(lambda * t).exp() * (FRAC_PI_2 * t).sin()]);
    let delayed = FRAC_PI_2 * lambda.exp();
    let rhs: Rhs = Arc::new(move |_, x| Ok(vec![lambda * x.eval(0.0)?[0] - delayed * x.eval(-1.0)?[0]]));
    Problem {
        name: "belzen".into(),
        tau: 1.0,
        dim: 1,
        dynamics: Dynamics::Dde(rhs),
        initial: exact.clone(),
        exact: Some(exact),
        mesh_offsets: vec![-1.0],
        components: vec!["x".into()],
    }
}

/// Level and amplitude `(c, A)` of the periodic solution `c + A sin(pi t / 2)`
/// of the quadratic renewal equation.
pub fn quadratic_re_parameters(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma.is_finite() && gamma != 0.0) {
        return Err(Error::Setup(format!("gamma must be finite and nonzero, got {gamma}")));
    }
    let c = 0.5 + PI / (4.0 * gamma);
    let a2 = 2.0 * c * (1.0 - 1.0 / gamma - c);
    if !(a2 >= 0.0) {
        return Err(Error::Setup(format!("no periodic solution for gamma = {gamma}: 2c(1 - 1/gamma - c) = {a2} < 0")));
    }
    Ok((c, a2.sqrt()))
}

/// `x(t) = (gamma/2) int_{t-3}^{t-1} x(s)(1 - x(s)) ds`, started on its
/// periodic solution.
pub fn quadratic_re(gamma: f64) -> Result<Problem> {
    let (c, amp) = quadratic_re_parameters(gamma)?;
    let exact: TimeFn = Arc::new(move |t| vec![c + amp * (FRAC_PI_2 * t).sin()]);
    let rhs: Rhs = Arc::new(move |_, x| {
        let v = integrate_view(x, -3.0, -1.0, 1, |_, y, out| out[0] = y[0] * (1.0 - y[0]))?;
        Ok(vec![0.5 * gamma * v[0]])
    });
    Ok(Problem {
        name: "quadratic_re".into(),
        tau: 3.0,
        dim: 1,
        dynamics: Dynamics::Re(rhs),
        initial: exact.clone(),
        exact: Some(exact),
        mesh_offsets: vec![-3.0, -1.0],
        components: vec!["x".into()],
    })
}

/// Parameters of the logistic Daphnia model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaphniaParams {
    pub beta: f64,
    pub r: f64,
    pub k: f64,
    pub gamma: f64,
    /// Age at maturation.
    pub abar: f64,
    /// Maximum age.
    pub amax: f64,
}

impl Default for DaphniaParams {
    fn default() -> Self {
        DaphniaParams { beta: 3.02, r: 1.0, k: 1.0, gamma: 1.0, abar: 3.0, amax: 4.0 }
    }
}

/// Birth rate `b` (RE) coupled to resource `S` (DDE):
/// `b = beta S int_abar^amax b(t-a) da`,
/// `S' = r S (1 - S/K) - gamma S int_abar^amax b(t-a) da`,
/// from the constant history `(b, S) = (0.7, 0.35)`.
pub fn daphnia(p: DaphniaParams) -> Result<Problem> {
    if !(0.0 < p.abar && p.abar < p.amax && p.amax.is_finite()) {
        return Err(Error::Setup(format!("need 0 < abar < amax, got abar = {}, amax = {}", p.abar, p.amax)));
    }
    if !(p.k != 0.0 && p.k.is_finite()) {
        return Err(Error::Setup(format!("carrying capacity must be finite and nonzero, got {}", p.k)));
    }
    let DaphniaParams { beta, r, k, gamma, abar, amax } = p;
    let rhs: CoupledRhs = Arc::new(move |_, b, s| {
        let adults = integrate_view(b, -amax, -abar, 1, |_, y, out| out[0] = y[0])?[0];
        let s0 = s.eval(0.0)?[0];
        Ok((vec![beta * s0 * adults], vec![r * s0 * (1.0 - s0 / k) - gamma * s0 * adults]))
    });
    Ok(Problem {
        name: "daphnia".into(),
        tau: amax,
        dim: 2,
        dynamics: Dynamics::Coupled { re_dim: 1, rhs },
        initial: Arc::new(|_| vec![0.7, 0.35]),
        exact: None,
        mesh_offsets: vec![-amax, -abar],
        components: vec!["b".into(), "S".into()],
    })
}

/// Optional parameter overrides for [`by_name`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProblemOverrides {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
}

/// A benchmark problem by name, with its default parameters unless overridden.
pub fn by_name(name: &str, o: ProblemOverrides) -> Result<Problem> {
    match name {
        "belzen" => Ok(belzen(o.lambda.unwrap_or(1.0))),
        "quadratic_re" | "quadraticRE" => quadratic_re(o.gamma.unwrap_or(4.0)),
        "daphnia" => {
            let mut p = DaphniaParams::default();
            if let Some(beta) = o.beta {
                p.beta = beta;
            }
            if let Some(gamma) = o.gamma {
                p.gamma = gamma;
            }
            daphnia(p)
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}
