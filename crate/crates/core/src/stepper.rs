//! One explicit ExpRK step on a delay state, and fixed-step integration.
//!
//! A step evaluates the stages in order. Stage `i` sees the current history
//! shifted by `c_i h`, with the piece on `[-c_i h, 0]` replaced by the action
//! of `h sum_j a_ij(h A_0)` on the earlier stage forcings. The weights `b`
//! produce the new cell on `[-h, 0]`, which is appended after dropping the
//! oldest cell.
//!
//! On a DDE state `phi_k(g A_0)` adds `h w s^k / k!` to the history, where `s`
//! runs from 0 at `theta = -g` to 1 at `theta = 0`, and `h w / k!` to the head.
//! On an RE state the history gains `w s^{k-1} / (gamma (k-1)!)`, which is the
//! derivative in `theta` of the integrated-state weight. In both cases the new
//! piece is a polynomial of degree at most `k` and is stored exactly. A
//! semilinear DDE `x' = L x + G` replaces these polynomials by matrix `phi`
//! actions, which are sampled and interpolated.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::{
    cell_count, interpolate_samples, Coeffs, HistoryKind, HistoryState, HistoryView, StageView, INTERPOLATION_NODES,
};
use crate::phi::{phi_linear_combination, PhiCombo};
use crate::tableau::Tableau;

/// Initial data or exact solution, as a function of time.
pub type TimeFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Right-hand side `F(t, x_t)` of a DDE, RE or semilinear DDE.
pub type Rhs = Arc<dyn Fn(f64, &dyn HistoryView) -> Result<Vec<f64>> + Send + Sync>;

/// Right-hand side of a coupled system; receives the RE and the DDE history
/// and returns `(F_RE, F_DDE)`.
pub type CoupledRhs =
    Arc<dyn Fn(f64, &dyn HistoryView, &dyn HistoryView) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Dde,
    Re,
    SemilinearDde,
    Coupled,
}

#[derive(Clone)]
pub enum Dynamics {
    /// `x'(t) = F(t, x_t)`.
    Dde(Rhs),
    /// `x(t) = F(t, x_t)`.
    Re(Rhs),
    /// `x'(t) = L x(t) + G(t, x_t)`.
    SemilinearDde { linear: DMatrix<f64>, rhs: Rhs },
    /// The first `re_dim` components obey a renewal equation, the rest a DDE.
    Coupled { re_dim: usize, rhs: CoupledRhs },
}

/// A delay equation with its initial history.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub tau: f64,
    pub dim: usize,
    pub dynamics: Dynamics,
    /// Initial history `phi(theta)` on `[-tau, 0]`; coupled systems list the RE
    /// components first.
    pub initial: TimeFn,
    pub exact: Option<TimeFn>,
    /// Delay offsets (distributed-delay limits) that must fall on mesh points.
    pub mesh_offsets: Vec<f64>,
    pub components: Vec<String>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("kind", &self.kind())
            .field("tau", &self.tau)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self.dynamics {
            Dynamics::Dde(_) => ProblemKind::Dde,
            Dynamics::Re(_) => ProblemKind::Re,
            Dynamics::SemilinearDde { .. } => ProblemKind::SemilinearDde,
            Dynamics::Coupled { .. } => ProblemKind::Coupled,
        }
    }

    /// Rejects meshes that do not resolve `tau` or the distributed-delay limits.
    pub fn check_mesh(&self, h: f64) -> Result<()> {
        cell_count(self.tau, h)?;
        for &off in &self.mesh_offsets {
            let r = -off / h;
            if (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) {
                return Err(Error::Setup(format!("delay offset {off} is not a multiple of h = {h}")));
            }
        }
        Ok(())
    }

    /// The projected initial state on the mesh of width `h`.
    pub fn initial_state(&self, h: f64) -> Result<SystemState> {
        self.check_mesh(h)?;
        let phi = self.initial.clone();
        match &self.dynamics {
            Dynamics::Dde(_) | Dynamics::SemilinearDde { .. } => {
                Ok(SystemState::Single(HistoryState::from_fn(HistoryKind::Dde, self.tau, h, |t| phi(t))?))
            }
            Dynamics::Re(_) => Ok(SystemState::Single(HistoryState::from_fn(HistoryKind::Re, self.tau, h, |t| phi(t))?)),
            Dynamics::Coupled { re_dim, .. } => {
                let k = *re_dim;
                let re = HistoryState::from_fn(HistoryKind::Re, self.tau, h, |t| phi(t)[..k].to_vec())?;
                let dde = HistoryState::from_fn(HistoryKind::Dde, self.tau, h, |t| phi(t)[k..].to_vec())?;
                Ok(SystemState::Coupled { re, dde })
            }
        }
    }
}

/// State of a whole system: one history, or an RE/DDE pair.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemState {
    Single(HistoryState),
    Coupled { re: HistoryState, dde: HistoryState },
}

impl SystemState {
    /// Current solution value `x(t_n)`: the head of a DDE history, the value
    /// at `theta = 0` of an RE history; RE components first.
    pub fn current(&self) -> Result<Vec<f64>> {
        match self {
            SystemState::Single(s) => s.eval(0.0),
            SystemState::Coupled { re, dde } => {
                let mut v = re.eval(0.0)?;
                v.extend(dde.eval(0.0)?);
                Ok(v)
            }
        }
    }

    pub fn single(&self) -> Option<&HistoryState> {
        match self {
            SystemState::Single(s) => Some(s),
            SystemState::Coupled { .. } => None,
        }
    }
}

fn check_step_mesh(state: &HistoryState, h: f64) -> Result<()> {
    if (state.h() - h).abs() > 1e-12 * h {
        return Err(Error::Contract(format!("state mesh {} differs from step size {h}", state.h())));
    }
    Ok(())
}

fn step_index(t_n: f64, h: f64) -> usize {
    (t_n / h).round().max(0.0) as usize
}

fn ensure_finite(values: &[f64], step: usize, stage: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step, stage })
    }
}

fn ensure_dim(values: &[f64], dim: usize) -> Result<()> {
    if values.len() != dim {
        return Err(Error::Contract(format!("right-hand side returned {} components, expected {dim}", values.len())));
    }
    Ok(())
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// DDE piece `y + h sum_j a_j (f_j; 0)` on `[-g, 0]` and its head.
fn dde_piece(combos: &[PhiCombo], h: f64, y: &[f64], fs: &[Vec<f64>]) -> (Vec<Coeffs>, Vec<f64>) {
    let dim = y.len();
    let mut coeffs = vec![[0.0; 4]; dim];
    let mut head = vec![0.0; dim];
    for (combo, f) in combos.iter().zip(fs) {
        for t in combo.terms() {
            let scale = h * t.weight / factorial(t.k);
            for d in 0..dim {
                coeffs[d][t.k as usize] += scale * f[d];
                head[d] += scale * f[d];
            }
        }
    }
    for d in 0..dim {
        coeffs[d][0] += y[d];
        head[d] += y[d];
    }
    (coeffs, head)
}

/// RE piece of `h sum_j a_j (f_j H)` on `[-g, 0]`, as a density in `theta`.
fn re_piece(combos: &[PhiCombo], dim: usize, fs: &[Vec<f64>]) -> Vec<Coeffs> {
    let mut coeffs = vec![[0.0; 4]; dim];
    for (combo, f) in combos.iter().zip(fs) {
        for t in combo.terms() {
            let scale = t.weight / (t.gamma * factorial(t.k - 1));
            for d in 0..dim {
                coeffs[d][t.k as usize - 1] += scale * f[d];
            }
        }
    }
    coeffs
}

/// Semilinear DDE piece: `e^{sigma L} y + h sum w (sigma/g)^k phi_k(sigma L) f`
/// with `sigma = g + theta`, interpolated at the Chebyshev–Lobatto points.
fn semilinear_piece(
    linear: &DMatrix<f64>,
    combos: &[PhiCombo],
    c: f64,
    h: f64,
    y: &[f64],
    fs: &[Vec<f64>],
) -> Result<(Vec<Coeffs>, Vec<f64>)> {
    let dim = y.len();
    let g = c * h;
    let max_k = combos.iter().flat_map(|x| x.terms()).map(|t| t.k as usize).max().unwrap_or(0);
    let y_vec = DVector::from_column_slice(y);
    let mut samples = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    for (node, sample) in INTERPOLATION_NODES.iter().zip(samples.iter_mut()) {
        let sigma = node * g;
        let mut vs = vec![DVector::zeros(dim); max_k + 1];
        vs[0] = y_vec.clone();
        for (combo, f) in combos.iter().zip(fs) {
            let f = DVector::from_column_slice(f);
            for t in combo.terms() {
                vs[t.k as usize] += &f * (h * t.weight * node.powi(t.k as i32));
            }
        }
        let v = phi_linear_combination(&(linear * sigma), &vs)?;
        sample.copy_from_slice(v.as_slice());
    }
    let coeffs = (0..dim)
        .map(|d| interpolate_samples([samples[0][d], samples[1][d], samples[2][d], samples[3][d]]))
        .collect();
    Ok((coeffs, samples[3].clone()))
}

#[derive(Clone, Copy)]
enum Flavor<'a> {
    Dde,
    Re,
    Semilinear(&'a DMatrix<f64>),
}

/// Overlay (and head, for DDE flavours) on `[-c h, 0]` built from `combos`.
fn build_piece(
    flavor: Flavor<'_>,
    base: &HistoryState,
    combos: &[PhiCombo],
    c: f64,
    h: f64,
    fs: &[Vec<f64>],
) -> Result<(Vec<Coeffs>, Option<Vec<f64>>)> {
    let dim = base.dim();
    match flavor {
        Flavor::Dde => {
            let y = base.head().expect("DDE state has a head");
            let (coeffs, head) = dde_piece(combos, h, y, fs);
            Ok((coeffs, Some(head)))
        }
        Flavor::Re => Ok((re_piece(combos, dim, fs), None)),
        Flavor::Semilinear(linear) => {
            let y = base.head().expect("DDE state has a head");
            let (coeffs, head) = semilinear_piece(linear, combos, c, h, y, fs)?;
            Ok((coeffs, Some(head)))
        }
    }
}

fn stage_view<'s>(
    flavor: Flavor<'_>,
    base: &'s HistoryState,
    tableau: &Tableau,
    i: usize,
    h: f64,
    fs: &[Vec<f64>],
) -> Result<StageView<'s>> {
    let c = tableau.c()[i];
    if c == 0.0 {
        return Ok(StageView::identity(base));
    }
    let (overlay, head) = build_piece(flavor, base, tableau.a_row(i), c, h, fs)?;
    StageView::new(base, c * h, overlay, head)
}

fn finish(
    flavor: Flavor<'_>,
    state: HistoryState,
    tableau: &Tableau,
    h: f64,
    fs: &[Vec<f64>],
    step: usize,
) -> Result<HistoryState> {
    let (coeffs, head) = build_piece(flavor, &state, tableau.b(), 1.0, h, fs)?;
    let stage = tableau.stages();
    for c in &coeffs {
        ensure_finite(c, step, stage)?;
    }
    if let Some(y) = &head {
        ensure_finite(y, step, stage)?;
    }
    Ok(state.push_cell(coeffs, head))
}

fn step_single(
    flavor: Flavor<'_>,
    rhs: &Rhs,
    tableau: &Tableau,
    state: HistoryState,
    t_n: f64,
    h: f64,
) -> Result<HistoryState> {
    check_step_mesh(&state, h)?;
    let step = step_index(t_n, h);
    let mut fs: Vec<Vec<f64>> = Vec::with_capacity(tableau.stages());
    for i in 0..tableau.stages() {
        let view = stage_view(flavor, &state, tableau, i, h, &fs)?;
        let f = rhs(t_n + tableau.c()[i] * h, &view)?;
        ensure_dim(&f, state.dim())?;
        ensure_finite(&f, step, i)?;
        fs.push(f);
    }
    finish(flavor, state, tableau, h, &fs, step)
}

/// One step of a DDE problem.
pub fn step_dde(problem: &Problem, tableau: &Tableau, state: HistoryState, t_n: f64, h: f64) -> Result<HistoryState> {
    let Dynamics::Dde(rhs) = &problem.dynamics else {
        return Err(Error::Contract(format!("{} is not a DDE problem", problem.name)));
    };
    if state.kind() != HistoryKind::Dde {
        return Err(Error::Kind { expected: "DDE" });
    }
    step_single(Flavor::Dde, rhs, tableau, state, t_n, h)
}

/// One step of an RE problem. Only the history `eta` is stepped; the
/// integrated state is derived on demand with [`HistoryState::j_integrate`].
pub fn step_re(problem: &Problem, tableau: &Tableau, state: HistoryState, t_n: f64, h: f64) -> Result<HistoryState> {
    let Dynamics::Re(rhs) = &problem.dynamics else {
        return Err(Error::Contract(format!("{} is not an RE problem", problem.name)));
    };
    if state.kind() != HistoryKind::Re {
        return Err(Error::Kind { expected: "RE" });
    }
    step_single(Flavor::Re, rhs, tableau, state, t_n, h)
}

/// One step of a semilinear DDE `x' = L x + G(t, x_t)`.
pub fn step_semilinear_dde(
    problem: &Problem,
    tableau: &Tableau,
    state: HistoryState,
    t_n: f64,
    h: f64,
) -> Result<HistoryState> {
    let Dynamics::SemilinearDde { linear, rhs } = &problem.dynamics else {
        return Err(Error::Contract(format!("{} has no stiff linear part", problem.name)));
    };
    if state.kind() != HistoryKind::Dde {
        return Err(Error::Kind { expected: "DDE" });
    }
    if linear.nrows() != state.dim() || linear.ncols() != state.dim() {
        return Err(Error::Contract("linear part does not match the state dimension".into()));
    }
    step_single(Flavor::Semilinear(linear), rhs, tableau, state, t_n, h)
}

/// One step of a coupled RE/DDE system; both components share the stages.
pub fn step_coupled(
    problem: &Problem,
    tableau: &Tableau,
    state_re: HistoryState,
    state_dde: HistoryState,
    t_n: f64,
    h: f64,
) -> Result<(HistoryState, HistoryState)> {
    let Dynamics::Coupled { rhs, .. } = &problem.dynamics else {
        return Err(Error::Contract(format!("{} is not a coupled problem", problem.name)));
    };
    if state_re.kind() != HistoryKind::Re || state_dde.kind() != HistoryKind::Dde {
        return Err(Error::Contract("coupled step needs an RE and a DDE state".into()));
    }
    if state_re.cells() != state_dde.cells() || state_re.h() != state_dde.h() {
        return Err(Error::Contract("coupled components live on different meshes".into()));
    }
    check_step_mesh(&state_re, h)?;
    let step = step_index(t_n, h);
    let nu = tableau.stages();
    let mut fs_re: Vec<Vec<f64>> = Vec::with_capacity(nu);
    let mut fs_dde: Vec<Vec<f64>> = Vec::with_capacity(nu);
    for i in 0..nu {
        let re_view = stage_view(Flavor::Re, &state_re, tableau, i, h, &fs_re)?;
        let dde_view = stage_view(Flavor::Dde, &state_dde, tableau, i, h, &fs_dde)?;
        let (f_re, f_dde) = rhs(t_n + tableau.c()[i] * h, &re_view, &dde_view)?;
        ensure_dim(&f_re, state_re.dim())?;
        ensure_dim(&f_dde, state_dde.dim())?;
        ensure_finite(&f_re, step, i)?;
        ensure_finite(&f_dde, step, i)?;
        fs_re.push(f_re);
        fs_dde.push(f_dde);
    }
    let re = finish(Flavor::Re, state_re, tableau, h, &fs_re, step)?;
    let dde = finish(Flavor::Dde, state_dde, tableau, h, &fs_dde, step)?;
    Ok((re, dde))
}

/// One step of whatever kind `problem` is.
pub fn step(problem: &Problem, tableau: &Tableau, state: SystemState, t_n: f64, h: f64) -> Result<SystemState> {
    match (problem.kind(), state) {
        (ProblemKind::Dde, SystemState::Single(s)) => step_dde(problem, tableau, s, t_n, h).map(SystemState::Single),
        (ProblemKind::Re, SystemState::Single(s)) => step_re(problem, tableau, s, t_n, h).map(SystemState::Single),
        (ProblemKind::SemilinearDde, SystemState::Single(s)) => {
            step_semilinear_dde(problem, tableau, s, t_n, h).map(SystemState::Single)
        }
        (ProblemKind::Coupled, SystemState::Coupled { re, dde }) => {
            let (re, dde) = step_coupled(problem, tableau, re, dde, t_n, h)?;
            Ok(SystemState::Coupled { re, dde })
        }
        (kind, _) => Err(Error::Contract(format!("state does not match a {kind:?} problem"))),
    }
}

/// Number of steps of width `h` in `[0, t_end]`, which must be an integer.
pub fn step_count(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Setup(format!("need h > 0 and T >= 0, got h = {h}, T = {t_end}")));
    }
    let ratio = t_end / h;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Setup(format!("T / h = {ratio} is not an integer")));
    }
    Ok(n as usize)
}

/// Integrates from `t = 0` to `t_end` with constant step `h`, calling
/// `observer(t_{n+1}, state)` after every step.
pub fn integrate<O>(problem: &Problem, tableau: &Tableau, h: f64, t_end: f64, mut observer: O) -> Result<SystemState>
where
    O: FnMut(f64, &SystemState),
{
    let n_steps = step_count(t_end, h)?;
    let mut state = problem.initial_state(h)?;
    for n in 0..n_steps {
        let t_n = n as f64 * h;
        state = step(problem, tableau, state, t_n, h).map_err(|e| match e {
            Error::NonFinite { stage, .. } => Error::NonFinite { step: n, stage },
            other => other,
        })?;
        observer((n + 1) as f64 * h, &state);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use crate::tableau::builtin;

    fn zero_rhs(dim: usize) -> Rhs {
        Arc::new(move |_, _| Ok(vec![0.0; dim]))
    }

    fn problem_with(dynamics: Dynamics, tau: f64, dim: usize, phi: TimeFn) -> Problem {
        Problem {
            name: "test".into(),
            tau,
            dim,
            dynamics,
            initial: phi,
            exact: None,
            mesh_offsets: vec![],
            components: (0..dim).map(|i| format!("x{i}")).collect(),
        }
    }

    #[test]
    fn expeuler_first_step_on_belzen() {
        let p = problems::belzen(1.0);
        let t = builtin("expeuler").unwrap();
        let s0 = p.initial_state(0.1).unwrap();
        let SystemState::Single(st) = s0 else { panic!() };
        let f0 = std::f64::consts::FRAC_PI_2;
        let st1 = step_dde(&p, &t, st, 0.0, 0.1).unwrap();
        let y1 = st1.head().unwrap()[0];
        assert!((y1 - 0.1 * f0).abs() < 1e-6, "{y1}");
        // new piece is y_0 + (h + theta) F
        let c = st1.segment_coeffs(st1.cells() - 1)[0];
        assert!(c[0].abs() < 1e-15 && (c[1] - y1).abs() < 1e-15 && c[2] == 0.0);
    }

    #[test]
    fn zero_forcing_is_a_pure_shift() {
        let phi: TimeFn = Arc::new(|t| vec![t.cos()]);
        for name in ["expeuler", "heun", "expo3"] {
            let t = builtin(name).unwrap();
            let p = problem_with(Dynamics::Dde(zero_rhs(1)), 1.0, 1, phi.clone());
            let SystemState::Single(st) = p.initial_state(0.25).unwrap() else { panic!() };
            let y = st.head().unwrap().to_vec();
            let expect = st.clone().push_cell(vec![[y[0], 0.0, 0.0, 0.0]], Some(y.clone()));
            let got = step_dde(&p, &t, st, 0.0, 0.25).unwrap();
            assert_eq!(got, expect, "{name}");

            let p = problem_with(Dynamics::Re(zero_rhs(1)), 1.0, 1, phi.clone());
            let SystemState::Single(st) = p.initial_state(0.25).unwrap() else { panic!() };
            let expect = st.clone().push_cell(vec![[0.0; 4]], None);
            assert_eq!(step_re(&p, &t, st, 0.0, 0.25).unwrap(), expect, "{name}");
        }
    }

    #[test]
    fn heun_new_piece_ends_at_average_slope() {
        let p = problems::belzen(1.0);
        let t = builtin("heun").unwrap();
        let h = 0.1;
        let SystemState::Single(st) = p.initial_state(h).unwrap() else { panic!() };
        let y0 = st.head().unwrap()[0];
        let Dynamics::Dde(rhs) = &p.dynamics else { panic!() };
        let f1 = rhs(0.0, &st).unwrap()[0];
        let stage2 = StageView::new(&st, h, vec![[y0, h * f1, 0.0, 0.0]], Some(vec![y0 + h * f1])).unwrap();
        let f2 = rhs(h, &stage2).unwrap()[0];
        let st1 = step_dde(&p, &t, st, 0.0, h).unwrap();
        let end = st1.eval(-1e-300).unwrap()[0];
        assert!((end - (y0 + h / 2.0 * (f1 + f2))).abs() < 1e-15);
        assert!((st1.head().unwrap()[0] - end).abs() < 1e-15);
    }

    #[test]
    fn re_euler_first_cell_is_the_initial_forcing() {
        let p = problems::quadratic_re(4.0).unwrap();
        let t = builtin("expeuler").unwrap();
        let SystemState::Single(st) = p.initial_state(0.1).unwrap() else { panic!() };
        let Dynamics::Re(rhs) = &p.dynamics else { panic!() };
        let f0 = rhs(0.0, &st).unwrap()[0];
        let c = 0.5 + std::f64::consts::PI / 16.0;
        assert!((f0 - c).abs() < 1e-5);
        let st1 = step_re(&p, &t, st, 0.0, 0.1).unwrap();
        assert_eq!(st1.segment_coeffs(st1.cells() - 1)[0], [f0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn re_heun_piece_interpolates_stage_values() {
        let p = problems::quadratic_re(4.0).unwrap();
        let t = builtin("heun").unwrap();
        let h = 0.1;
        let SystemState::Single(st) = p.initial_state(h).unwrap() else { panic!() };
        let Dynamics::Re(rhs) = &p.dynamics else { panic!() };
        let f1 = rhs(0.0, &st).unwrap()[0];
        let stage2 = StageView::new(&st, h, vec![[f1, 0.0, 0.0, 0.0]], None).unwrap();
        let f2 = rhs(h, &stage2).unwrap()[0];
        let st1 = step_re(&p, &t, st, 0.0, h).unwrap();
        let c = st1.segment_coeffs(st1.cells() - 1)[0];
        assert!((c[0] - f1).abs() < 1e-15);
        assert!((c[0] + c[1] - f2).abs() < 1e-15);
    }

    #[test]
    fn semilinear_pure_decay() {
        let linear = DMatrix::from_element(1, 1, -1.0);
        let p = problem_with(
            Dynamics::SemilinearDde { linear, rhs: zero_rhs(1) },
            1.0,
            1,
            Arc::new(|_| vec![1.0]),
        );
        let t = builtin("expeuler").unwrap();
        let SystemState::Single(st) = p.initial_state(0.1).unwrap() else { panic!() };
        let st1 = step_semilinear_dde(&p, &t, st, 0.0, 0.1).unwrap();
        assert!((st1.head().unwrap()[0] - (-0.1f64).exp()).abs() < 1e-15);
        for theta in [-0.1, -0.07, -0.02] {
            let v = st1.eval(theta).unwrap()[0];
            assert!((v - (-(0.1 + theta)).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn semilinear_stiff_step_stays_bounded() {
        let linear = DMatrix::from_element(1, 1, -1e4);
        let g: Rhs = Arc::new(|_, x| Ok(vec![x.eval(-0.5)?[0].sin()]));
        let p = problem_with(Dynamics::SemilinearDde { linear, rhs: g }, 1.0, 1, Arc::new(|t| vec![1.0 + t]));
        let t = builtin("expeuler").unwrap();
        let SystemState::Single(st) = p.initial_state(0.1).unwrap() else { panic!() };
        let st1 = step_semilinear_dde(&p, &t, st, 0.0, 0.1).unwrap();
        let y1 = st1.head().unwrap()[0];
        assert!(y1.abs() <= 1.0 + 0.1 * 1.0);
    }

    #[test]
    fn semilinear_requires_linear_part() {
        let p = problems::belzen(1.0);
        let t = builtin("expeuler").unwrap();
        let SystemState::Single(st) = p.initial_state(0.1).unwrap() else { panic!() };
        assert!(step_semilinear_dde(&p, &t, st, 0.0, 0.1).is_err());
    }

    #[test]
    fn coupled_daphnia_first_euler_step() {
        let p = problems::daphnia(problems::DaphniaParams::default()).unwrap();
        let t = builtin("expeuler").unwrap();
        let SystemState::Coupled { re, dde } = p.initial_state(0.01).unwrap() else { panic!() };
        let (re1, dde1) = step_coupled(&p, &t, re, dde, 0.0, 0.01).unwrap();
        assert!((dde1.head().unwrap()[0] - 0.349_825).abs() < 1e-14);
        assert!((re1.eval(0.0).unwrap()[0] - 3.02 * 0.35 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn coupled_rejects_mismatched_meshes() {
        let p = problems::daphnia(problems::DaphniaParams::default()).unwrap();
        let t = builtin("expeuler").unwrap();
        let re = HistoryState::from_fn(HistoryKind::Re, 4.0, 0.01, |_| vec![0.7]).unwrap();
        let dde = HistoryState::from_fn(HistoryKind::Dde, 4.0, 0.02, |_| vec![0.35]).unwrap();
        assert!(step_coupled(&p, &t, re, dde, 0.0, 0.01).is_err());
    }

    #[test]
    fn non_finite_values_abort_with_diagnostics() {
        let bad: Rhs = Arc::new(|t, _| Ok(vec![if t > 0.25 { f64::NAN } else { 1.0 }]));
        let p = problem_with(Dynamics::Dde(bad), 1.0, 1, Arc::new(|_| vec![0.0]));
        let t = builtin("heun").unwrap();
        let err = integrate(&p, &t, 0.1, 1.0, |_, _| {}).unwrap_err();
        assert_eq!(err, Error::NonFinite { step: 2, stage: 1 });
    }

    #[test]
    fn integrate_zero_steps_and_observer_contract() {
        let p = problems::belzen(1.0);
        let t = builtin("expeuler").unwrap();
        let s0 = p.initial_state(0.1).unwrap();
        assert_eq!(integrate(&p, &t, 0.1, 0.0, |_, _| panic!("no steps")).unwrap(), s0);
        let mut times = Vec::new();
        integrate(&p, &t, 0.1, 0.5, |t, _| times.push(t)).unwrap();
        assert_eq!(times.len(), 5);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!(integrate(&p, &t, 0.3, 1.0, |_, _| {}).is_err());
    }
}
