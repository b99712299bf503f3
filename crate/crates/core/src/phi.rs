//! The `phi_k` functions and their actions.
//!
//! `phi_0(z) = e^z` and `phi_k(z) = ∫_0^1 e^{z(1-s)} s^{k-1}/(k-1)! ds` for
//! `k >= 1`, with `phi_k(z) = z phi_{k+1}(z) + 1/k!`. Besides the scalar
//! functions this module provides the piecewise weights through which
//! `h^k phi_k(h A_0)` acts on delay states, and `phi_k(M) v` for matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SERIES_RADIUS: f64 = 0.1;
const CANCELLATION_LIMIT: f64 = 1e-13;

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

fn phi_series(k: u32, z: f64) -> f64 {
    // sum_{m>=0} z^m / (m+k)!
    let mut term = 1.0 / factorial(k);
    let mut sum = term;
    let mut m = 0u32;
    loop {
        m += 1;
        term *= z / (m + k) as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || m > 200 {
            break;
        }
    }
    sum
}

/// Relative error amplification of the downward recursion up to order `k`.
fn recursion_amplification(k: u32, z: f64) -> f64 {
    (1..k).fold(1.0, |acc, j| acc * ((j + 1) as f64 / z.abs()).max(1.0))
}

/// `phi_k(z)` for real `z`.
pub fn phi_scalar(k: u32, z: f64) -> f64 {
    if k == 0 {
        return z.exp();
    }
    if z == 0.0 {
        return 1.0 / factorial(k);
    }
    if z.abs() < SERIES_RADIUS || f64::EPSILON * recursion_amplification(k, z) > CANCELLATION_LIMIT {
        return phi_series(k, z);
    }
    let mut phi = z.exp_m1() / z;
    for j in 1..k {
        phi = (phi - 1.0 / factorial(j)) / z;
    }
    phi
}

/// One term `weight * phi_k(gamma * z)` of a tableau coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTerm {
    pub k: u32,
    pub gamma: f64,
    pub weight: f64,
}

/// A tableau coefficient: a finite linear combination of `phi_k(gamma z)`, `k >= 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhiCombo {
    terms: Vec<PhiTerm>,
}

impl PhiCombo {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<PhiTerm>) -> Result<Self> {
        for t in &terms {
            if t.k == 0 {
                return Err(Error::Contract("tableau coefficients use phi_k with k >= 1 only".into()));
            }
            if !(t.gamma > 0.0 && t.gamma <= 1.0) {
                return Err(Error::Contract(format!("node scale {} outside (0, 1]", t.gamma)));
            }
        }
        Ok(Self { terms })
    }

    /// Builds from `(k, gamma, weight)` triples; panics on invalid input.
    pub fn from_triples(triples: &[(u32, f64, f64)]) -> Self {
        let terms = triples.iter().map(|&(k, gamma, weight)| PhiTerm { k, gamma, weight }).collect();
        Self::new(terms).expect("valid phi combination")
    }

    pub fn terms(&self) -> &[PhiTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, z: f64) -> f64 {
        phi_combo_eval(self, z)
    }
}

/// `sum w * phi_k(gamma z)` over the terms of `combo`.
pub fn phi_combo_eval(combo: &PhiCombo, z: f64) -> f64 {
    combo.terms.iter().map(|t| t.weight * phi_scalar(t.k, t.gamma * z)).sum()
}

/// Weight of `phi_k(gh A_0)` on the history component of a DDE forcing
/// `(f; 0)`: `max(0, gh + theta)^k / (gh^k k!)`. The head weight is `1/k!`.
pub fn phi_dde_weight(k: u32, gh: f64, theta: f64) -> f64 {
    let r = (gh + theta).max(0.0);
    (r / gh).powi(k as i32) / factorial(k)
}

/// Weight of `phi_k(gh A_0)` acting on an RE forcing `f H`, as a function of
/// `theta` in the integrated state: `(gh^k - max(0, gh + theta)^k) / (gh^k k!)`.
pub fn phi_re_weight(k: u32, gh: f64, theta: f64) -> f64 {
    let r = (gh + theta).max(0.0);
    (1.0 - (r / gh).powi(k as i32)) / factorial(k)
}

/// Matrix exponential, via nalgebra's scaling-and-squaring Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Contract("matrix exponential of a non-square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    Ok(a.exp())
}

/// `sum_k phi_k(M) v_k` with `vs[k]` multiplying `phi_k` (`vs[0]` is paired with
/// `e^M`), from a single exponential of the augmented matrix
/// `[[M, B], [0, J]]` where `J` is the nilpotent shift.
pub fn phi_linear_combination(m: &DMatrix<f64>, vs: &[DVector<f64>]) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(Error::Contract("phi action needs a square matrix".into()));
    }
    let d = m.nrows();
    if vs.is_empty() {
        return Ok(DVector::zeros(d));
    }
    if vs.iter().any(|v| v.len() != d) {
        return Err(Error::Contract("vector length does not match the matrix".into()));
    }
    let p = vs.len() - 1;
    let scale = vs[1..].iter().map(|v| v.amax()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut aug = DMatrix::<f64>::zeros(d + p, d + p);
    aug.view_mut((0, 0), (d, d)).copy_from(m);
    for (k, v) in vs.iter().enumerate().skip(1) {
        // column c (0-based within B) feeds phi_{p-c}
        let col = d + p - k;
        aug.view_mut((0, col), (d, 1)).copy_from(&(v / scale));
    }
    for j in 0..p.saturating_sub(1) {
        aug[(d + j, d + j + 1)] = 1.0;
    }
    let e = expm(&aug)?;
    let mut out = e.view((0, 0), (d, d)) * &vs[0];
    if p > 0 {
        let last = e.view((0, d + p - 1), (d, 1)).into_owned();
        out += last * scale;
    }
    Ok(out)
}

/// `phi_k(M) v` for `1 <= k <= 4`.
pub fn phi_matrix_action(k: u32, m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(1..=4).contains(&k) {
        return Err(Error::Contract(format!("phi_{k} action not supported (1 <= k <= 4)")));
    }
    if !m.is_square() || m.nrows() != v.len() {
        return Err(Error::Contract("phi action dimension mismatch".into()));
    }
    let d = v.len();
    let mut vs = vec![DVector::zeros(d); k as usize + 1];
    vs[k as usize] = v.clone();
    phi_linear_combination(m, &vs)
}
