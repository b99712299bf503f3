//! Convergence studies, simulations and order checks behind the CLI.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::history::{cell_count, HistoryState, HistoryView, Norm, GL4_NODES, GL4_WEIGHTS};
use crate::stepper::{integrate, Problem, ProblemKind, SystemState, TimeFn};
use crate::tableau::{builtin, check_order, OrderMode, OrderReport, Tableau};

/// How independent integrations are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

/// Runs `f` over `jobs`, keeping the input order of the results.
fn run_jobs<J, T, F>(jobs: &[J], exec: Execution, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(f).collect()
        }
        _ => jobs.iter().map(f).collect(),
    }
}

/// Least-squares slope of `log err` against `log h`. Pairs with
/// `err < 1e3 eps` sit on the roundoff floor and are dropped.
pub fn estimate_order(hs: &[f64], errs: &[f64]) -> Result<f64> {
    if hs.len() != errs.len() {
        return Err(Error::Estimation(format!("{} step sizes but {} errors", hs.len(), errs.len())));
    }
    let floor = 1e3 * f64::EPSILON;
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(h, e)| **h > 0.0 && e.is_finite() && **e >= floor)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Estimation(format!("{} usable (h, err) pairs, need 2", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Estimation("all usable step sizes coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Order from three runs at step sizes `h, h/ratio, h/ratio^2`.
pub fn richardson_order(coarse: f64, mid: f64, fine: f64, ratio: f64) -> Result<f64> {
    let num = (coarse - mid).abs();
    let den = (mid - fine).abs();
    if !(num > 0.0 && den > 0.0) || !(ratio > 1.0) {
        return Err(Error::Estimation("degenerate Richardson triple".into()));
    }
    Ok((num / den).ln() / ratio.ln())
}

/// Default end time, step sizes and norm of a benchmark.
pub fn defaults(problem: &str) -> (f64, Vec<f64>, Norm) {
    match problem {
        "quadratic_re" | "quadraticRE" => (4.0, vec![1e-1, 1e-2, 1e-3], Norm::L1),
        "daphnia" => (60.0, vec![1e-2], Norm::Sup),
        _ => (2.0, vec![1e-1, 1e-2, 1e-3, 1e-4], Norm::Sup),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub problem: String,
    pub method: String,
    pub h: f64,
    pub err_x: f64,
    pub err_u: f64,
}

pub const CONVERGE_HEADER: &str = "problem,method,h,err_x,err_u";

/// `∫_theta^0 x(t + s) ds` for a smooth exact solution, built on the mesh of
/// width `h` with an 8-panel Gauss–Legendre rule per cell.
struct ExactIntegral {
    exact: TimeFn,
    t: f64,
    tau: f64,
    h: f64,
    /// `suffix[i]`: integral over the cells right of cell `i`.
    suffix: Vec<Vec<f64>>,
}

impl ExactIntegral {
    const PANELS: usize = 8;

    fn new(exact: TimeFn, t: f64, tau: f64, h: f64, dim: usize) -> Result<Self> {
        let cells = cell_count(tau, h)?;
        let mut me = ExactIntegral { exact, t, tau, h, suffix: vec![vec![0.0; dim]; cells] };
        for i in (0..cells.saturating_sub(1)).rev() {
            let left = me.left(i + 1);
            let piece = me.piece(left, left + h);
            let next: Vec<f64> = me.suffix[i + 1].iter().zip(&piece).map(|(a, b)| a + b).collect();
            me.suffix[i] = next;
        }
        Ok(me)
    }

    fn left(&self, i: usize) -> f64 {
        -((self.suffix.len() - i) as f64) * self.h
    }

    fn piece(&self, a: f64, b: f64) -> Vec<f64> {
        let width = (b - a) / Self::PANELS as f64;
        let mut acc = vec![0.0; self.suffix[0].len()];
        if width == 0.0 {
            return acc;
        }
        for p in 0..Self::PANELS {
            let lo = a + p as f64 * width;
            for (s, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                let x = (self.exact)(self.t + lo + s * width);
                for (a, v) in acc.iter_mut().zip(x) {
                    *a += w * width * v;
                }
            }
        }
        acc
    }

    fn eval(&self, theta: f64) -> Vec<f64> {
        let cells = self.suffix.len();
        let i = (((theta + self.tau) / self.h).floor().max(0.0) as usize).min(cells - 1);
        let right = self.left(i) + self.h;
        let part = self.piece(theta, right);
        part.iter().zip(&self.suffix[i]).map(|(a, b)| a + b).collect()
    }
}

/// Errors `(err_x, err_u)` of a final state against the exact solution at `t`.
///
/// DDE: `err_x` is the head error, `err_u` the history error in `norm`.
/// RE: `err_x` is the error of `eta` and `err_u` that of the integrated state
/// `u = j eta`, both in `norm`.
pub fn state_errors(problem: &Problem, state: &HistoryState, t: f64, norm: Norm) -> Result<(f64, f64)> {
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::Setup(format!("{} has no exact solution", problem.name)))?;
    let at = |theta: f64| exact(t + theta);
    match problem.kind() {
        ProblemKind::Dde | ProblemKind::SemilinearDde => {
            let y = state.head().ok_or(Error::Kind { expected: "DDE" })?;
            let err_x = y.iter().zip(exact(t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((err_x, state.norm_diff(at, norm)?))
        }
        ProblemKind::Re => {
            let err_x = state.norm_diff(at, norm)?;
            let reference = ExactIntegral::new(exact.clone(), t, state.tau(), state.h(), state.dim())?;
            let err_u = state.integrated()?.norm_diff(|theta| reference.eval(theta), norm)?;
            Ok((err_x, err_u))
        }
        ProblemKind::Coupled => Err(Error::Setup("coupled problems have no exact-solution errors".into())),
    }
}

fn sort_rows(rows: &mut [ConvergeRow]) {
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(b.h.partial_cmp(&a.h).unwrap_or(Ordering::Equal)));
}

/// Integrates `problem` for every `(method, h)` pair and measures the errors
/// at `t_end`. Rows come back sorted by method, then by decreasing `h`.
pub fn converge(
    problem: &Problem,
    methods: &[Tableau],
    hs: &[f64],
    t_end: f64,
    norm: Norm,
    exec: Execution,
) -> Result<Vec<ConvergeRow>> {
    if problem.exact.is_none() {
        return Err(Error::Setup(format!("{} has no exact solution to converge against", problem.name)));
    }
    for &h in hs {
        problem.check_mesh(h)?;
        crate::stepper::step_count(t_end, h)?;
    }
    let jobs: Vec<(&Tableau, f64)> = methods.iter().flat_map(|m| hs.iter().map(move |&h| (m, h))).collect();
    let results = run_jobs(&jobs, exec, |&(tableau, h)| -> Result<ConvergeRow> {
        let end = integrate(problem, tableau, h, t_end, |_, _| {})?;
        let SystemState::Single(state) = end else {
            return Err(Error::Setup("coupled problems have no exact-solution errors".into()));
        };
        let (err_x, err_u) = state_errors(problem, &state, t_end, norm)?;
        Ok(ConvergeRow { problem: problem.name.clone(), method: tableau.name().to_string(), h, err_x, err_u })
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Fitted orders per method, in the order the methods first appear in `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub method: String,
    pub slope_x: Result<f64>,
    pub slope_u: Result<f64>,
}

pub fn fit_slopes(rows: &[ConvergeRow]) -> Vec<SlopeFit> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let sel: Vec<&ConvergeRow> = rows.iter().filter(|r| r.method == m).collect();
            let hs: Vec<f64> = sel.iter().map(|r| r.h).collect();
            let ex: Vec<f64> = sel.iter().map(|r| r.err_x).collect();
            let eu: Vec<f64> = sel.iter().map(|r| r.err_u).collect();
            SlopeFit { method: m.to_string(), slope_x: estimate_order(&hs, &ex), slope_u: estimate_order(&hs, &eu) }
        })
        .collect()
}

pub fn write_converge_csv<W: Write>(out: &mut W, rows: &[ConvergeRow]) -> io::Result<()> {
    writeln!(out, "{CONVERGE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{:.16e},{:.16e},{:.16e}", r.problem, r.method, r.h, r.err_x, r.err_u)?;
    }
    Ok(())
}

pub fn slope_report(fits: &[SlopeFit]) -> String {
    let show = |r: &Result<f64>| match r {
        Ok(p) => format!("{p:.4}"),
        Err(_) => "n/a".to_string(),
    };
    let mut s = String::new();
    for f in fits {
        let _ = writeln!(s, "slope {}: err_x {} err_u {}", f.method, show(&f.slope_x), show(&f.slope_u));
    }
    s
}

/// Integrates and writes `t,components...` every `sample_every` steps. The
/// initial and final states are always written.
pub fn simulate<W: Write>(
    out: &mut W,
    problem: &Problem,
    tableau: &Tableau,
    h: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<SystemState> {
    if sample_every == 0 {
        return Err(Error::Setup("sample-every must be positive".into()));
    }
    let n_steps = crate::stepper::step_count(t_end, h)?;
    let initial = problem.initial_state(h)?;
    let mut buf = String::new();
    buf.push('t');
    for c in &problem.components {
        buf.push(',');
        buf.push_str(c);
    }
    buf.push('\n');
    let row = |t: f64, state: &SystemState, buf: &mut String| -> Result<()> {
        let _ = write!(buf, "{t:.16e}");
        for v in state.current()? {
            let _ = write!(buf, ",{v:.16e}");
        }
        buf.push('\n');
        Ok(())
    };
    row(0.0, &initial, &mut buf)?;
    let mut step = 0usize;
    let mut failure = None;
    let end = integrate(problem, tableau, h, t_end, |t, state| {
        step += 1;
        if failure.is_none() && (step.is_multiple_of(sample_every) || step == n_steps) {
            if let Err(e) = row(t, state, &mut buf) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    out.write_all(buf.as_bytes()).map_err(|e| Error::Setup(format!("write failed: {e}")))?;
    Ok(end)
}

/// Order-condition report for a built-in method.
pub fn check(method: &str, order: u32, mode: OrderMode) -> Result<OrderReport> {
    check_order(&builtin(method)?, order, mode)
}
