//! Explicit exponential Runge–Kutta tableaux and their stiff order conditions.
//!
//! Coefficients are kept as [`PhiCombo`]s. The stepper and the order checker
//! both read them from here, so there is no second, numeric copy of a tableau.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::phi::{phi_scalar, PhiCombo};

/// Arguments `z` at which the operator conditions are sampled.
pub const SAMPLE_Z: [f64; 7] = [-20.0, -5.0, -1.0, 0.0, 0.5, 2.0, 10.0];

/// Largest residual accepted as "satisfied".
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Largest `k` a tableau may use; the history pieces are cubics.
pub const MAX_PHI_ORDER: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderMode {
    Strong,
    Weak,
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::Strong => "strong",
            OrderMode::Weak => "weak",
        })
    }
}

impl std::str::FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strong" => Ok(OrderMode::Strong),
            "weak" => Ok(OrderMode::Weak),
            other => Err(Error::Setup(format!("unknown order mode `{other}` (expected strong or weak)"))),
        }
    }
}

/// A `nu`-stage explicit ExpRK method.
#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    name: String,
    c: Vec<f64>,
    /// Row `i` holds `a_{i0}, ..., a_{i,i-1}`.
    a: Vec<Vec<PhiCombo>>,
    b: Vec<PhiCombo>,
    declared_order: u32,
    declared_mode: OrderMode,
}

fn same_node(gamma: f64, c: f64) -> bool {
    (gamma - c).abs() <= 1e-14
}

impl Tableau {
    pub fn new(
        name: impl Into<String>,
        c: Vec<f64>,
        a: Vec<Vec<PhiCombo>>,
        b: Vec<PhiCombo>,
        declared_order: u32,
        declared_mode: OrderMode,
    ) -> Result<Self> {
        let nu = c.len();
        if nu == 0 || c[0] != 0.0 {
            return Err(Error::Contract("first node must be c_1 = 0".into()));
        }
        if c.iter().any(|&ci| !(0.0..=1.0).contains(&ci)) {
            return Err(Error::Contract("nodes must lie in [0, 1]".into()));
        }
        if a.len() != nu || b.len() != nu {
            return Err(Error::Contract("a and b must have one entry per stage".into()));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != i {
                return Err(Error::Contract(format!("row {i} of a must be strictly lower triangular")));
            }
            for combo in row {
                for t in combo.terms() {
                    if !same_node(t.gamma, c[i]) {
                        return Err(Error::Contract(format!(
                            "a-row {i} uses phi_k({} z) but its node is {}",
                            t.gamma, c[i]
                        )));
                    }
                }
            }
            if c[i] == 0.0 && row.iter().any(|x| !x.is_empty()) {
                return Err(Error::Contract(format!("stage {i} has c = 0 but nonzero coupling")));
            }
        }
        for combo in a.iter().flatten().chain(&b) {
            if combo.terms().iter().any(|t| t.k > MAX_PHI_ORDER) {
                return Err(Error::Contract(format!("phi_k with k > {MAX_PHI_ORDER} is not supported")));
            }
        }
        if b.iter().flat_map(|x| x.terms()).any(|t| !same_node(t.gamma, 1.0)) {
            return Err(Error::Contract("weights b_i must be combinations of phi_k(z)".into()));
        }
        Ok(Self { name: name.into(), c, a, b, declared_order, declared_mode })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a_row(&self, i: usize) -> &[PhiCombo] {
        &self.a[i]
    }

    pub fn b(&self) -> &[PhiCombo] {
        &self.b
    }

    pub fn declared_order(&self) -> u32 {
        self.declared_order
    }

    pub fn declared_mode(&self) -> OrderMode {
        self.declared_mode
    }

    fn a_at(&self, i: usize, k: usize, z: f64) -> f64 {
        self.a[i][k].eval(z)
    }

    fn b_at(&self, i: usize, z: f64, weak: bool) -> f64 {
        self.b[i].eval(if weak { 0.0 } else { z })
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["expeuler", "heun", "expo3"];

/// The exponential Euler method (stiff order 1), the exponential Heun method
/// with `c_2 = 1` (stiff order 2), and the three-stage method with
/// `c = (0, 1/2, 2/3)` that satisfies the order-3 conditions in weak form.
pub fn builtin(name: &str) -> Result<Tableau> {
    let combo = PhiCombo::from_triples;
    match name.to_ascii_lowercase().as_str() {
        "expeuler" | "euler" => Tableau::new(
            "expeuler",
            vec![0.0],
            vec![vec![]],
            vec![combo(&[(1, 1.0, 1.0)])],
            1,
            OrderMode::Strong,
        ),
        "heun" | "expheun" => {
            let c2 = 1.0;
            Tableau::new(
                "heun",
                vec![0.0, c2],
                vec![vec![], vec![combo(&[(1, c2, c2)])]],
                vec![combo(&[(1, 1.0, 1.0), (2, 1.0, -1.0 / c2)]), combo(&[(2, 1.0, 1.0 / c2)])],
                2,
                OrderMode::Strong,
            )
        }
        "expo3" | "exprk3" => Tableau::new(
            "expo3",
            vec![0.0, 0.5, 2.0 / 3.0],
            vec![
                vec![],
                vec![combo(&[(1, 0.5, 0.5)])],
                vec![
                    combo(&[(1, 2.0 / 3.0, 2.0 / 3.0), (2, 2.0 / 3.0, -8.0 / 9.0)]),
                    combo(&[(2, 2.0 / 3.0, 8.0 / 9.0)]),
                ],
            ],
            vec![combo(&[(1, 1.0, 1.0), (2, 1.0, -1.5)]), PhiCombo::zero(), combo(&[(2, 1.0, 1.5)])],
            3,
            OrderMode::Weak,
        ),
        _ => Err(Error::UnknownMethod(name.to_string())),
    }
}

fn inv_factorial(n: u32) -> f64 {
    1.0 / (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `psi_j(z) = phi_j(z) - sum_k B_k c_k^{j-1}/(j-1)!`, with `B_k = b_k(z)`, or
/// `b_k(0)` when `weak` is set.
pub fn psi_b(t: &Tableau, j: u32, z: f64, weak: bool) -> f64 {
    let sum: f64 = (0..t.stages())
        .map(|k| t.b_at(k, z, weak) * t.c[k].powi(j as i32 - 1))
        .sum();
    phi_scalar(j, z) - sum * inv_factorial(j - 1)
}

/// `psi_{j,i}(z) = c_i^j phi_j(c_i z) - sum_{k<i} a_{ik}(z) c_k^{j-1}/(j-1)!`
/// for the 0-based stage `i`.
pub fn psi_a(t: &Tableau, j: u32, i: usize, z: f64) -> f64 {
    let ci = t.c[i];
    let lead = if ci == 0.0 { 0.0 } else { ci.powi(j as i32) * phi_scalar(j, ci * z) };
    let sum: f64 = (0..i).map(|k| t.a_at(i, k, z) * t.c[k].powi(j as i32 - 1)).sum();
    lead - sum * inv_factorial(j - 1)
}

/// How a condition row was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionForm {
    Strong,
    /// `b_i(z)` replaced by `b_i(0)`.
    Weak,
    /// `sum_i b_i(0) c_i^{p-1} = 1/p`, which replaces `psi_p = 0` in weak form.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    /// Row number in the order-condition table.
    pub row: u8,
    pub order: u32,
    pub form: ConditionForm,
    /// `(z, |residual|)` for each sampled argument.
    pub samples: Vec<(f64, f64)>,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub method: String,
    pub order: u32,
    pub mode: OrderMode,
    pub pass: bool,
    pub failed_conditions: BTreeSet<u8>,
    pub residual: f64,
    pub conditions: Vec<ConditionResult>,
}

impl OrderReport {
    pub fn condition(&self, row: u8) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.row == row)
    }
}

impl fmt::Display for OrderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} order {} ({})", self.method, self.order, self.mode)?;
        for c in &self.conditions {
            let label = match c.form {
                ConditionForm::Quadrature => "quadrature".to_string(),
                _ => format!("row {}", c.row),
            };
            let form = match c.form {
                ConditionForm::Strong => "strong",
                ConditionForm::Weak => "weak",
                ConditionForm::Quadrature => "b(0)",
            };
            writeln!(
                f,
                "  {label:<10} order {} {form:<6} max|psi| = {:.3e}  {}",
                c.order,
                c.residual,
                if c.pass { "pass" } else { "FAIL" }
            )?;
        }
        write!(f, "result: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

fn row_order(row: u8) -> u32 {
    match row {
        1 => 1,
        2 | 3 => 2,
        4 | 5 => 3,
        _ => 4,
    }
}

/// Residual of one table row at `z`. `weak` replaces `b_i(z)` by `b_i(0)`.
/// Arbitrary operators `J`, `K` are taken to be the scalar 1.
fn row_residual(t: &Tableau, row: u8, z: f64, weak: bool) -> f64 {
    let nu = t.stages();
    let b = |i: usize| t.b_at(i, z, weak);
    match row {
        1 => psi_b(t, 1, z, weak).abs(),
        2 => psi_b(t, 2, z, weak).abs(),
        3 => (0..nu).map(|i| psi_a(t, 1, i, z).abs()).fold(0.0, f64::max),
        4 => psi_b(t, 3, z, weak).abs(),
        5 => (0..nu).map(|i| b(i) * psi_a(t, 2, i, z)).sum::<f64>().abs(),
        6 => psi_b(t, 4, z, weak).abs(),
        7 => (0..nu).map(|i| b(i) * psi_a(t, 3, i, z)).sum::<f64>().abs(),
        8 => (0..nu)
            .map(|i| b(i) * (1..i).map(|j| t.a_at(i, j, z) * psi_a(t, 2, j, z)).sum::<f64>())
            .sum::<f64>()
            .abs(),
        9 => (0..nu).map(|i| b(i) * t.c[i] * psi_a(t, 2, i, z)).sum::<f64>().abs(),
        _ => unreachable!("rows are 1..=9"),
    }
}

fn evaluate(row: u8, order: u32, form: ConditionForm, zs: &[f64], f: impl Fn(f64) -> f64) -> ConditionResult {
    let samples: Vec<(f64, f64)> = zs.iter().map(|&z| (z, f(z))).collect();
    let residual = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    ConditionResult { row, order, form, samples, residual, pass: residual <= RESIDUAL_TOLERANCE }
}

/// Checks the stiff order conditions up to order `p` (at most 4).
///
/// Strong mode requires every row of order `<= p` at all sample arguments.
/// Weak mode requires rows of order `< p` strongly, the quadrature identity
/// `sum b_i(0) c_i^{p-1} = 1/p` (the weak form of `psi_p = 0`), and the remaining
/// order-`p` rows with `b_i(0)`.
pub fn check_order(t: &Tableau, p: u32, mode: OrderMode) -> Result<OrderReport> {
    if !(1..=4).contains(&p) {
        return Err(Error::Contract(format!("order {p} outside 1..=4")));
    }
    let mut conditions = Vec::new();
    for row in 1u8..=9 {
        let order = row_order(row);
        if order > p {
            continue;
        }
        let weak = mode == OrderMode::Weak && order == p;
        let is_psi_row = matches!(row, 1 | 2 | 4 | 6);
        let result = if weak && is_psi_row {
            let target = 1.0 / p as f64;
            let sum: f64 = (0..t.stages()).map(|i| t.b_at(i, 0.0, true) * t.c[i].powi(p as i32 - 1)).sum();
            let mut r = evaluate(row, order, ConditionForm::Quadrature, &[0.0], |_| (sum - target).abs());
            r.row = row;
            r
        } else if weak {
            evaluate(row, order, ConditionForm::Weak, &SAMPLE_Z, |z| row_residual(t, row, z, true))
        } else {
            evaluate(row, order, ConditionForm::Strong, &SAMPLE_Z, |z| row_residual(t, row, z, false))
        };
        conditions.push(result);
    }
    let failed_conditions: BTreeSet<u8> = conditions.iter().filter(|c| !c.pass).map(|c| c.row).collect();
    let residual = conditions.iter().map(|c| c.residual).fold(0.0, f64::max);
    Ok(OrderReport {
        method: t.name.clone(),
        order: p,
        mode,
        pass: failed_conditions.is_empty(),
        failed_conditions,
        residual,
        conditions,
    })
}

/// `sum_i b_i(0) c_i^{q}`, the classical quadrature sums.
pub fn quadrature_sum(t: &Tableau, q: u32) -> f64 {
    (0..t.stages()).map(|i| t.b_at(i, 0.0, true) * t.c[i].powi(q as i32)).sum()
}
