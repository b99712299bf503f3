//! Piecewise-polynomial history states on a uniform mesh over `[-tau, 0]`.
//!
//! A [`HistoryState`] stores one cubic per mesh cell in a ring buffer, oldest
//! cell first. Each cell is parametrised by the local coordinate
//! `s = (theta - left) / h` in `[0, 1]`, so a shift by one cell is a pop at the
//! front and a push at the back; cell positions are derived from indices and
//! never accumulate rounding.
//!
//! Two flavours exist. A DDE state carries the head value `y = x(t)` next to the
//! history and keeps the history continuous with it at `theta = 0`. An RE state
//! is an `L^1` function without a head; at interior knots evaluation takes the
//! left limit.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Polynomial degree of every stored piece.
pub const DEGREE: usize = 3;

/// Monomial coefficients `c_0 + c_1 s + c_2 s^2 + c_3 s^3` of one component.
pub type Coeffs = [f64; DEGREE + 1];

/// Chebyshev–Lobatto points of `[0, 1]` used for interpolation.
pub const INTERPOLATION_NODES: [f64; 4] = [0.0, 0.25, 0.75, 1.0];

// Inverse Vandermonde matrix of INTERPOLATION_NODES: coeffs = M * samples.
const INV_VANDERMONDE: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [-19.0 / 3.0, 8.0, -8.0 / 3.0, 1.0],
    [32.0 / 3.0, -56.0 / 3.0, 40.0 / 3.0, -16.0 / 3.0],
    [-16.0 / 3.0, 32.0 / 3.0, -32.0 / 3.0, 16.0 / 3.0],
];

const SUP_SAMPLES: usize = 16;

// Gauss–Legendre, 4 nodes on [0, 1].
pub(crate) const GL4_NODES: [f64; 4] = [
    0.5 - 0.5 * 0.861_136_311_594_052_6,
    0.5 - 0.5 * 0.339_981_043_584_856_3,
    0.5 + 0.5 * 0.339_981_043_584_856_3,
    0.5 + 0.5 * 0.861_136_311_594_052_6,
];
pub(crate) const GL4_WEIGHTS: [f64; 4] = [
    0.5 * 0.347_854_845_137_453_8,
    0.5 * 0.652_145_154_862_546_1,
    0.5 * 0.652_145_154_862_546_1,
    0.5 * 0.347_854_845_137_453_8,
];

#[inline]
pub(crate) fn horner(c: &Coeffs, s: f64) -> f64 {
    ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
}

/// Cubic through `samples` taken at [`INTERPOLATION_NODES`].
///
/// Works on differences from the first sample, so constants are reproduced
/// exactly.
pub fn interpolate_samples(samples: [f64; 4]) -> Coeffs {
    let d = [samples[1] - samples[0], samples[2] - samples[0], samples[3] - samples[0]];
    let mut out = [samples[0], 0.0, 0.0, 0.0];
    for (row, o) in INV_VANDERMONDE.iter().zip(out.iter_mut()).skip(1) {
        *o = row[1..].iter().zip(d.iter()).map(|(m, v)| m * v).sum();
    }
    out
}

/// `∫_{s0}^{1} p(s) ds` for a local polynomial.
#[inline]
fn tail_integral(c: &Coeffs, s0: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = s0;
    for (m, cm) in c.iter().enumerate() {
        acc += cm * (1.0 - pow) / (m as f64 + 1.0);
        pow *= s0;
    }
    acc
}

fn sup_sample_points() -> [f64; SUP_SAMPLES] {
    let mut pts = [0.0; SUP_SAMPLES];
    for (j, p) in pts.iter_mut().enumerate() {
        *p = 0.5 * (1.0 - ((2 * j + 1) as f64 * PI / (2 * SUP_SAMPLES) as f64).cos());
    }
    pts
}

fn domain_slack(tau: f64) -> f64 {
    1e-12 * tau.max(1.0)
}

/// Which abstract setting a history belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryKind {
    /// Delay differential equation: state `(x(t); x_t)`, continuous.
    Dde,
    /// Renewal equation: state `x_t` in `L^1`, no head.
    Re,
}

impl HistoryKind {
    fn name(self) -> &'static str {
        match self {
            HistoryKind::Dde => "DDE",
            HistoryKind::Re => "RE",
        }
    }
}

/// Norm used to compare a history against a reference function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    /// Max over 16 Chebyshev points per cell of the componentwise max-norm.
    Sup,
    /// Composite 4-point Gauss–Legendre of the 1-norm.
    L1,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sup" | "max" | "inf" => Ok(Norm::Sup),
            "l1" => Ok(Norm::L1),
            other => Err(Error::Setup(format!("unknown norm `{other}` (expected sup or l1)"))),
        }
    }
}

/// One polynomial piece of a history over `[left, left + width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    pub left: f64,
    pub width: f64,
    /// Per-component coefficients in `s = (theta - left) / width`.
    pub coeffs: Vec<Coeffs>,
}

impl HistorySegment {
    pub fn new(left: f64, width: f64, coeffs: Vec<Coeffs>) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Contract(format!("segment width {width} must be positive")));
        }
        if left + width > domain_slack(width) {
            return Err(Error::Contract(format!(
                "segment [{left}, {}] extends past theta = 0",
                left + width
            )));
        }
        if coeffs.is_empty() {
            return Err(Error::Contract("segment has no components".into()));
        }
        Ok(Self { left, width, coeffs })
    }

    pub fn constant(left: f64, width: f64, value: &[f64]) -> Result<Self> {
        Self::new(left, width, value.iter().map(|&v| [v, 0.0, 0.0, 0.0]).collect())
    }

    /// Cubic interpolant of `f` at the Chebyshev–Lobatto points of the cell.
    pub fn interpolate<F>(left: f64, width: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let samples: Vec<Vec<f64>> =
            INTERPOLATION_NODES.iter().map(|s| f(left + s * width)).collect();
        let dim = samples[0].len();
        if samples.iter().any(|v| v.len() != dim) {
            return Err(Error::Contract("sampled function changes dimension".into()));
        }
        let coeffs = (0..dim)
            .map(|i| interpolate_samples([samples[0][i], samples[1][i], samples[2][i], samples[3][i]]))
            .collect();
        Self::new(left, width, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let s = (theta - self.left) / self.width;
        self.coeffs.iter().map(|c| horner(c, s)).collect()
    }
}

/// Read-only access to a history function on `[-tau, 0]`.
///
/// Implemented by [`HistoryState`] and [`StageView`]; right-hand sides of the
/// problems only ever see this trait.
pub trait HistoryView {
    fn kind(&self) -> HistoryKind;
    fn dim(&self) -> usize;
    fn tau(&self) -> f64;

    /// Writes the value at `theta` into `out` (length [`dim`](Self::dim)).
    fn eval_into(&self, theta: f64, out: &mut [f64]) -> Result<()>;

    fn eval(&self, theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(theta, &mut out)?;
        Ok(out)
    }

    /// Appends, in ascending order, every point of the open interval `(a, b)`
    /// where the view may lose smoothness.
    fn knots(&self, a: f64, b: f64, out: &mut Vec<f64>);
}

/// The state `u_n` of an integrator: a piecewise cubic history on a uniform mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    kind: HistoryKind,
    dim: usize,
    tau: f64,
    h: f64,
    cells: usize,
    head: Option<Vec<f64>>,
    segments: VecDeque<Vec<Coeffs>>,
}

/// Number of mesh cells in `[-tau, 0]`, rejecting non-integer ratios.
pub fn cell_count(tau: f64, h: f64) -> Result<usize> {
    if !(tau > 0.0) || !(h > 0.0) || !tau.is_finite() || !h.is_finite() {
        return Err(Error::Setup(format!("tau = {tau} and h = {h} must be positive")));
    }
    let ratio = tau / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Setup(format!("tau / h = {ratio} is not a positive integer")));
    }
    Ok(n as usize)
}

impl HistoryState {
    /// Projects `phi` onto the mesh: each cell stores the cubic interpolant of
    /// `phi` at its Chebyshev–Lobatto points. DDE states take `phi(0)` as head.
    pub fn from_fn<F>(kind: HistoryKind, tau: f64, h: f64, phi: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let cells = cell_count(tau, h)?;
        let head_value = phi(0.0);
        let dim = head_value.len();
        if dim == 0 {
            return Err(Error::Setup("initial data has dimension zero".into()));
        }
        let mut segments = VecDeque::with_capacity(cells);
        for i in 0..cells {
            let left = -((cells - i) as f64) * h;
            let seg = HistorySegment::interpolate(left, h, &phi)?;
            if seg.dim() != dim {
                return Err(Error::Setup("initial data changes dimension".into()));
            }
            segments.push_back(seg.coeffs);
        }
        let head = match kind {
            HistoryKind::Dde => Some(head_value),
            HistoryKind::Re => None,
        };
        Ok(Self { kind, dim, tau, h, cells, head, segments })
    }

    /// Builds a state from explicit pieces, which must tile `[-tau, 0]` in order.
    pub fn from_segments(
        kind: HistoryKind,
        tau: f64,
        h: f64,
        head: Option<Vec<f64>>,
        pieces: Vec<HistorySegment>,
    ) -> Result<Self> {
        let cells = cell_count(tau, h)?;
        if pieces.len() != cells {
            return Err(Error::Contract(format!("expected {cells} segments, got {}", pieces.len())));
        }
        let dim = pieces[0].dim();
        let mut segments = VecDeque::with_capacity(cells);
        for (i, seg) in pieces.into_iter().enumerate() {
            let left = -((cells - i) as f64) * h;
            if (seg.left - left).abs() > 1e-9 * h || (seg.width - h).abs() > 1e-9 * h {
                return Err(Error::Contract(format!("segment {i} does not cover [{left}, {}]", left + h)));
            }
            if seg.dim() != dim {
                return Err(Error::Contract(format!("segment {i} has the wrong dimension")));
            }
            segments.push_back(seg.coeffs);
        }
        let state = Self { kind, dim, tau, h, cells, head: None, segments };
        state.with_head(head)
    }

    fn with_head(mut self, head: Option<Vec<f64>>) -> Result<Self> {
        match (self.kind, head) {
            (HistoryKind::Dde, Some(y)) => {
                if y.len() != self.dim {
                    return Err(Error::Contract("head has the wrong dimension".into()));
                }
                let last = self.segments.back().expect("at least one cell");
                check_continuity(last, &y)?;
                self.head = Some(y);
                Ok(self)
            }
            (HistoryKind::Dde, None) => Err(Error::Contract("DDE state requires a head value".into())),
            (HistoryKind::Re, None) => Ok(self),
            (HistoryKind::Re, Some(_)) => Err(Error::Contract("RE state has no head value".into())),
        }
    }

    pub fn kind(&self) -> HistoryKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Head value `y = x(t)`; `None` for RE states.
    pub fn head(&self) -> Option<&[f64]> {
        self.head.as_deref()
    }

    /// Coefficients of the `i`-th cell, counted from the oldest.
    pub fn segment_coeffs(&self, i: usize) -> &[Coeffs] {
        &self.segments[i]
    }

    /// Left end of the `i`-th cell, derived from its index.
    pub fn segment_left(&self, i: usize) -> f64 {
        -((self.cells - i) as f64) * self.h
    }

    pub fn segments(&self) -> impl Iterator<Item = HistorySegment> + '_ {
        self.segments.iter().enumerate().map(|(i, c)| HistorySegment {
            left: self.segment_left(i),
            width: self.h,
            coeffs: c.clone(),
        })
    }

    /// Cell index and local coordinate of `theta`; knots map to the cell on their left.
    #[inline]
    fn locate(&self, theta: f64) -> Result<(usize, f64)> {
        if !(theta <= domain_slack(self.tau) && theta >= -self.tau - domain_slack(self.tau)) {
            return Err(Error::Domain { theta, tau: self.tau });
        }
        let back = (-theta / self.h).max(0.0);
        let mut j = back.floor();
        if j >= self.cells as f64 {
            j = (self.cells - 1) as f64;
        }
        let s = (j + 1.0 - back).clamp(0.0, 1.0);
        Ok((self.cells - 1 - j as usize, s))
    }

    /// Drops the oldest cell and appends `segment` on `[-h, 0]`.
    ///
    /// DDE states need `new_head`, and the new piece must end at it.
    pub fn shift_append(self, segment: HistorySegment, new_head: Option<Vec<f64>>) -> Result<Self> {
        let h = self.h;
        if (segment.left + h).abs() > 1e-9 * h || (segment.width - h).abs() > 1e-9 * h {
            return Err(Error::Contract(format!(
                "new segment [{}, {}] does not cover [-h, 0] with h = {h}",
                segment.left,
                segment.left + segment.width
            )));
        }
        if segment.dim() != self.dim {
            return Err(Error::Contract("new segment has the wrong dimension".into()));
        }
        match (self.kind, &new_head) {
            (HistoryKind::Dde, Some(y)) => {
                if y.len() != self.dim {
                    return Err(Error::Contract("new head has the wrong dimension".into()));
                }
                check_continuity(&segment.coeffs, y)?;
            }
            (HistoryKind::Dde, None) => {
                return Err(Error::Contract("DDE shift requires a new head value".into()))
            }
            (HistoryKind::Re, Some(_)) => {
                return Err(Error::Contract("RE shift takes no head value".into()))
            }
            (HistoryKind::Re, None) => {}
        }
        Ok(self.push_cell(segment.coeffs, new_head))
    }

    pub(crate) fn push_cell(mut self, coeffs: Vec<Coeffs>, new_head: Option<Vec<f64>>) -> Self {
        debug_assert_eq!(coeffs.len(), self.dim);
        self.segments.pop_front();
        self.segments.push_back(coeffs);
        if self.kind == HistoryKind::Dde {
            self.head = new_head;
        }
        self
    }

    /// `∫_theta^0 eta(s) ds` of an RE state, exact per cell.
    pub fn j_integrate(&self, theta: f64) -> Result<Vec<f64>> {
        if self.kind != HistoryKind::Re {
            return Err(Error::Kind { expected: "RE" });
        }
        let (idx, s) = self.locate(theta)?;
        let mut out: Vec<f64> =
            self.segments[idx].iter().map(|c| self.h * tail_integral(c, s)).collect();
        for seg in self.segments.iter().skip(idx + 1) {
            for (o, c) in out.iter_mut().zip(seg) {
                *o += self.h * tail_integral(c, 0.0);
            }
        }
        Ok(out)
    }

    /// Precomputed form of [`j_integrate`](Self::j_integrate) for many evaluations.
    pub fn integrated(&self) -> Result<IntegratedHistory<'_>> {
        if self.kind != HistoryKind::Re {
            return Err(Error::Kind { expected: "RE" });
        }
        let mut suffix = vec![vec![0.0; self.dim]; self.cells];
        for i in (0..self.cells.saturating_sub(1)).rev() {
            let next = &self.segments[i + 1];
            let mut acc = suffix[i + 1].clone();
            for (a, c) in acc.iter_mut().zip(next) {
                *a += self.h * tail_integral(c, 0.0);
            }
            suffix[i] = acc;
        }
        Ok(IntegratedHistory { state: self, suffix })
    }

    /// Distance between the state and `reference` on `[-tau, 0]`.
    pub fn norm_diff<R>(&self, reference: R, norm: Norm) -> Result<f64>
    where
        R: Fn(f64) -> Vec<f64>,
    {
        norm_diff_on_mesh(self.tau, self.h, self.dim, |t, out| self.eval_into(t, out), reference, norm)
    }
}

fn check_continuity(last: &[Coeffs], head: &[f64]) -> Result<()> {
    for (c, y) in last.iter().zip(head) {
        let end = horner(c, 1.0);
        if (end - y).abs() > 1e-10 * (1.0 + y.abs()) {
            return Err(Error::Contract(format!(
                "history ends at {end} but the head value is {y}"
            )));
        }
    }
    Ok(())
}

impl HistoryView for HistoryState {
    fn kind(&self) -> HistoryKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    fn eval_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        if theta == 0.0 {
            if let Some(y) = &self.head {
                out.copy_from_slice(y);
                return Ok(());
            }
        }
        let (idx, s) = self.locate(theta)?;
        for (o, c) in out.iter_mut().zip(&self.segments[idx]) {
            *o = horner(c, s);
        }
        Ok(())
    }

    fn knots(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let eps = domain_slack(self.h);
        let hi = ((-a / self.h).floor() as i64).min(self.cells as i64 - 1);
        let lo = ((-b / self.h).ceil() as i64).max(1);
        for j in (lo..=hi).rev() {
            let k = -(j as f64) * self.h;
            if k > a + eps && k < b - eps {
                out.push(k);
            }
        }
    }
}

/// The integrated state `u = j eta` of an RE history, `u(theta) = ∫_theta^0 eta`.
#[derive(Debug, Clone)]
pub struct IntegratedHistory<'a> {
    state: &'a HistoryState,
    suffix: Vec<Vec<f64>>,
}

impl IntegratedHistory<'_> {
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        let (idx, s) = self.state.locate(theta)?;
        for ((o, c), acc) in out.iter_mut().zip(&self.state.segments[idx]).zip(&self.suffix[idx]) {
            *o = acc + self.state.h * tail_integral(c, s);
        }
        Ok(())
    }

    pub fn eval(&self, theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state.dim];
        self.eval_into(theta, &mut out)?;
        Ok(out)
    }

    pub fn norm_diff<R>(&self, reference: R, norm: Norm) -> Result<f64>
    where
        R: Fn(f64) -> Vec<f64>,
    {
        let st = self.state;
        norm_diff_on_mesh(st.tau, st.h, st.dim, |t, out| self.eval_into(t, out), reference, norm)
    }
}

/// Cell-wise sup or L1 distance between two functions on the mesh of `[-tau, 0]`
/// with cell width `h`.
pub fn norm_diff_on_mesh<A, R>(tau: f64, h: f64, dim: usize, approx: A, reference: R, norm: Norm) -> Result<f64>
where
    A: Fn(f64, &mut [f64]) -> Result<()>,
    R: Fn(f64) -> Vec<f64>,
{
    let cells = cell_count(tau, h)?;
    let mut buf = vec![0.0; dim];
    let mut diff_at = |theta: f64| -> Result<Vec<f64>> {
        approx(theta, &mut buf)?;
        let r = reference(theta);
        if r.len() != dim {
            return Err(Error::Contract("reference has the wrong dimension".into()));
        }
        Ok(buf.iter().zip(&r).map(|(a, b)| (a - b).abs()).collect())
    };
    match norm {
        Norm::Sup => {
            let pts = sup_sample_points();
            let mut worst: f64 = 0.0;
            for i in 0..cells {
                let left = -((cells - i) as f64) * h;
                for s in pts {
                    let d = diff_at(left + s * h)?;
                    worst = d.into_iter().fold(worst, f64::max);
                }
            }
            Ok(worst)
        }
        Norm::L1 => {
            let mut total = 0.0;
            for i in 0..cells {
                let left = -((cells - i) as f64) * h;
                for (s, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                    let d = diff_at(left + s * h)?;
                    total += w * h * d.into_iter().sum::<f64>();
                }
            }
            Ok(total)
        }
    }
}

/// A stage history `U_{n,i}`: the base history shifted by `c_i h`, with a
/// polynomial overlay on `[-c_i h, 0]`.
///
/// Nothing is materialised; evaluation left of `-shift` reads the base at
/// `theta + shift`.
#[derive(Debug, Clone)]
pub struct StageView<'a> {
    base: &'a HistoryState,
    shift: f64,
    overlay: Vec<Coeffs>,
    head: Option<Vec<f64>>,
}

impl<'a> StageView<'a> {
    /// `overlay` is given in `s = (theta + shift) / shift`.
    pub fn new(base: &'a HistoryState, shift: f64, overlay: Vec<Coeffs>, head: Option<Vec<f64>>) -> Result<Self> {
        if !(shift > 0.0) || shift > base.tau {
            return Err(Error::Contract(format!("stage shift {shift} outside (0, tau]")));
        }
        if overlay.len() != base.dim {
            return Err(Error::Contract("overlay has the wrong dimension".into()));
        }
        match (base.kind, &head) {
            (HistoryKind::Dde, Some(y)) if y.len() == base.dim => {}
            (HistoryKind::Re, None) => {}
            _ => return Err(Error::Contract(format!("stage head does not match a {} base", base.kind.name()))),
        }
        Ok(Self { base, shift, overlay, head })
    }

    /// The trivial view of stage one, `c_1 = 0`.
    pub fn identity(base: &'a HistoryState) -> Self {
        Self { base, shift: 0.0, overlay: Vec::new(), head: base.head.clone() }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn head(&self) -> Option<&[f64]> {
        self.head.as_deref()
    }

    pub fn overlay(&self) -> &[Coeffs] {
        &self.overlay
    }
}

impl HistoryView for StageView<'_> {
    fn kind(&self) -> HistoryKind {
        self.base.kind
    }

    fn dim(&self) -> usize {
        self.base.dim
    }

    fn tau(&self) -> f64 {
        self.base.tau
    }

    #[inline]
    fn eval_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        if self.shift == 0.0 {
            return self.base.eval_into(theta, out);
        }
        let slack = domain_slack(self.base.tau);
        if !(theta <= slack && theta >= -self.base.tau - slack) {
            return Err(Error::Domain { theta, tau: self.base.tau });
        }
        if theta == 0.0 {
            if let Some(y) = &self.head {
                out.copy_from_slice(y);
                return Ok(());
            }
        }
        if theta >= -self.shift {
            let s = ((theta + self.shift) / self.shift).clamp(0.0, 1.0);
            for (o, c) in out.iter_mut().zip(&self.overlay) {
                *o = horner(c, s);
            }
            Ok(())
        } else {
            self.base.eval_into(theta + self.shift, out)
        }
    }

    fn knots(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        if self.shift == 0.0 {
            return self.base.knots(a, b, out);
        }
        let edge = -self.shift;
        let mut base_knots = Vec::new();
        self.base.knots(a + self.shift, (b + self.shift).min(0.0), &mut base_knots);
        let eps = domain_slack(self.base.h);
        out.extend(base_knots.into_iter().map(|k| k - self.shift).filter(|&k| k < edge - eps));
        if edge > a + eps && edge < b - eps {
            out.push(edge);
        }
    }
}
