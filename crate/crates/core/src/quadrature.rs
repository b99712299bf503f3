//! Composite Gauss–Legendre quadrature over history views.
//!
//! The interval is split at every knot of the view, so each piece sees a single
//! polynomial and the 4-point rule is exact for integrands of degree 7.

use crate::error::{Error, Result};
use crate::history::{HistoryView, GL4_NODES, GL4_WEIGHTS};

/// `∫_a^b g(theta, x(theta)) dtheta` for the view `x`.
///
/// `integrand(theta, x, out)` writes the `m` components of `g` into `out`.
pub fn integrate_view<V, G>(view: &V, a: f64, b: f64, m: usize, mut integrand: G) -> Result<Vec<f64>>
where
    V: HistoryView + ?Sized,
    G: FnMut(f64, &[f64], &mut [f64]),
{
    let tau = view.tau();
    let slack = 1e-12 * tau.max(1.0);
    if !(a < b) || a < -tau - slack || b > slack {
        return Err(Error::Contract(format!("integration interval [{a}, {b}] not inside [-{tau}, 0]")));
    }
    let mut cuts = Vec::new();
    cuts.push(a);
    view.knots(a, b, &mut cuts);
    cuts.push(b);

    let mut x = vec![0.0; view.dim()];
    let mut g = vec![0.0; m];
    let mut total = vec![0.0; m];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        for (s, wt) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
            let theta = lo + s * len;
            view.eval_into(theta, &mut x)?;
            integrand(theta, &x, &mut g);
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += wt * len * gi;
            }
        }
    }
    Ok(total)
}

/// Integral of the view itself over `[a, b]`.
pub fn integrate_values<V>(view: &V, a: f64, b: f64) -> Result<Vec<f64>>
where
    V: HistoryView + ?Sized,
{
    integrate_view(view, a, b, view.dim(), |_, x, out| out.copy_from_slice(x))
}
