use std::sync::Arc;

use exprk::harness::estimate_order;
use exprk::history::{interpolate_samples, HistoryKind, HistoryState, HistoryView, StageView};
use exprk::phi::{phi_dde_weight, phi_matrix_action, phi_re_weight, phi_scalar};
use exprk::problems;
use exprk::stepper::{step, step_dde, step_re, Dynamics, Problem, Rhs, SystemState, TimeFn};
use exprk::tableau::{builtin, BUILTIN_NAMES};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

fn method() -> impl Strategy<Value = &'static str> {
    prop::sample::select(BUILTIN_NAMES.to_vec())
}

fn kind() -> impl Strategy<Value = HistoryKind> {
    prop_oneof![Just(HistoryKind::Dde), Just(HistoryKind::Re)]
}

fn zero_problem(kind: HistoryKind, tau: f64) -> Problem {
    let rhs: Rhs = Arc::new(|_, _| Ok(vec![0.0]));
    Problem {
        name: "zero".into(),
        tau,
        dim: 1,
        dynamics: if kind == HistoryKind::Dde { Dynamics::Dde(rhs) } else { Dynamics::Re(rhs) },
        initial: Arc::new(|t| vec![(3.0 * t).cos() + t]),
        exact: None,
        mesh_offsets: vec![],
        components: vec!["x".into()],
    }
}

fn run(p: &Problem, name: &str, state: SystemState, h: f64, n0: usize, steps: usize) -> SystemState {
    let t = builtin(name).unwrap();
    (n0..n0 + steps).fold(state, |s, n| step(p, &t, s, n as f64 * h, h).unwrap())
}

proptest! {
    #[test]
    fn phi_recursion_identity(k in 0u32..=3, z in -100.0..30.0f64) {
        let pk = phi_scalar(k, z);
        let lhs = pk - z * phi_scalar(k + 1, z) - 1.0 / factorial(k);
        prop_assert!(lhs.abs() <= 1e-12 * (1.0 + pk.abs()), "k {} z {}: {}", k, z, lhs);
    }

    #[test]
    fn delay_weights_are_complementary(k in 1u32..=4, gh in 1e-3..2.0f64, frac in -3.0..0.0f64) {
        let theta = frac * gh;
        let sum = (phi_dde_weight(k, gh, theta) + phi_re_weight(k, gh, theta)) * gh.powi(k as i32) * factorial(k);
        prop_assert!((sum - gh.powi(k as i32)).abs() <= 1e-14 * gh.powi(k as i32));
    }

    #[test]
    fn matrix_action_is_linear(
        k in 1u32..=4,
        m in prop::collection::vec(-2.0..2.0f64, 25),
        v in prop::collection::vec(-1.0..1.0f64, 5),
        w in prop::collection::vec(-1.0..1.0f64, 5),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let m = DMatrix::from_row_slice(5, 5, &m);
        let (v, w) = (DVector::from_vec(v), DVector::from_vec(w));
        let lhs = phi_matrix_action(k, &m, &(&v * a + &w * b)).unwrap();
        let rhs = phi_matrix_action(k, &m, &v).unwrap() * a + phi_matrix_action(k, &m, &w).unwrap() * b;
        let scale = 1.0 + rhs.amax();
        prop_assert!((lhs - rhs).amax() <= 1e-13 * scale);
    }

    #[test]
    fn interpolation_reproduces_cubics(c in prop::array::uniform4(-5.0..5.0f64)) {
        let p = |s: f64| ((c[3] * s + c[2]) * s + c[1]) * s + c[0];
        let got = interpolate_samples([p(0.0), p(0.25), p(0.75), p(1.0)]);
        for i in 0..4 {
            prop_assert!((got[i] - c[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn pure_shift_for_zero_forcing(name in method(), kind in kind(), cells in 2usize..12, steps in 1usize..15) {
        let h = 0.125;
        let tau = cells as f64 * h;
        let p = zero_problem(kind, tau);
        let SystemState::Single(mut st) = p.initial_state(h).unwrap() else { unreachable!() };
        let tab = builtin(name).unwrap();
        for n in 0..steps {
            let before = st.clone();
            st = match kind {
                HistoryKind::Dde => step_dde(&p, &tab, st, n as f64 * h, h).unwrap(),
                HistoryKind::Re => step_re(&p, &tab, st, n as f64 * h, h).unwrap(),
            };
            for i in 0..cells - 1 {
                prop_assert_eq!(st.segment_coeffs(i), before.segment_coeffs(i + 1));
            }
            let fill = match kind {
                HistoryKind::Dde => [before.head().unwrap()[0], 0.0, 0.0, 0.0],
                HistoryKind::Re => [0.0; 4],
            };
            prop_assert_eq!(st.segment_coeffs(cells - 1), &[fill][..]);
            prop_assert_eq!(st.head(), before.head());
        }
    }

    #[test]
    fn semigroup_composition(name in method(), kind in kind(), k in 0usize..8, m in 0usize..8) {
        let h = 0.25;
        let p = zero_problem(kind, 1.5);
        let s0 = p.initial_state(h).unwrap();
        let once = run(&p, name, s0.clone(), h, 0, k + m);
        let split = run(&p, name, run(&p, name, s0, h, 0, k), h, k, m);
        prop_assert_eq!(once, split);
    }

    #[test]
    fn tiling_is_exact(name in method(), steps in 0usize..40) {
        let h = 0.1;
        let p = problems::belzen(0.5);
        let SystemState::Single(st) = run(&p, name, p.initial_state(h).unwrap(), h, 0, steps) else { unreachable!() };
        for i in 0..st.cells() {
            prop_assert_eq!(st.segment_left(i), -((st.cells() - i) as f64) * h);
        }
    }

    #[test]
    fn dde_head_continuity(name in method(), lambda in -2.0..1.0f64, hi in 0usize..3) {
        let h = [0.1, 0.05, 0.025][hi];
        let p = problems::belzen(lambda);
        let tab = builtin(name).unwrap();
        let SystemState::Single(mut st) = p.initial_state(h).unwrap() else { unreachable!() };
        for n in 0..(2.0 / h).round() as usize {
            st = step_dde(&p, &tab, st, n as f64 * h, h).unwrap();
            let last = st.segment_coeffs(st.cells() - 1)[0];
            let end = last.iter().sum::<f64>();
            let y = st.head().unwrap()[0];
            prop_assert!((end - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn stage_view_is_shifted_composition(
        kind in kind(),
        frac in 0.05..1.0f64,
        o in prop::array::uniform4(-2.0..2.0f64),
        thetas in prop::collection::vec(0.0..1.0f64, 100),
    ) {
        let h = 0.2;
        let tau = 1.0;
        let base = HistoryState::from_fn(kind, tau, h, |t| vec![(2.0 * t).sin() - t * t]).unwrap();
        let shift = frac * h;
        let head = (kind == HistoryKind::Dde).then(|| vec![o.iter().sum()]);
        let view = StageView::new(&base, shift, vec![o], head).unwrap();
        for u in thetas {
            let theta = -u * tau;
            let got = view.eval(theta).unwrap()[0];
            let want = if theta >= -shift {
                let s = (theta + shift) / shift;
                ((o[3] * s + o[2]) * s + o[1]) * s + o[0]
            } else {
                base.eval(theta + shift).unwrap()[0]
            };
            prop_assert!((got - want).abs() <= 1e-14 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn semilinear_with_zero_linear_part_is_the_plain_step(name in method(), lambda in -2.0..1.0f64) {
        let h = 0.02;
        let dde = problems::belzen(lambda);
        let Dynamics::Dde(rhs) = dde.dynamics.clone() else { unreachable!() };
        let mut semi = dde.clone();
        semi.dynamics = Dynamics::SemilinearDde { linear: DMatrix::zeros(1, 1), rhs };
        let a = run(&dde, name, dde.initial_state(h).unwrap(), h, 0, 100);
        let b = run(&semi, name, semi.initial_state(h).unwrap(), h, 0, 100);
        let (SystemState::Single(a), SystemState::Single(b)) = (a, b) else { unreachable!() };
        prop_assert!((a.head().unwrap()[0] - b.head().unwrap()[0]).abs() <= 1e-12);
        for i in 0..20 {
            let th = -0.05 * i as f64;
            prop_assert!((a.eval(th).unwrap()[0] - b.eval(th).unwrap()[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn order_fit_recovers_power_laws(c in 1e-3..1e3f64, p in 0.5..4.0f64) {
        let hs = [1e-1f64, 5e-2, 2e-2, 1e-2];
        let errs: Vec<f64> = hs.iter().map(|h| c * h.powf(p)).collect();
        prop_assert!((estimate_order(&hs, &errs).unwrap() - p).abs() < 1e-12);
    }
}

#[test]
fn semilinear_split_matches_plain_dde_with_moved_linear_term() {
    // x' = -5 x + G treated with L = -5 against the same problem as a plain
    // DDE: both converge to the same trajectory
    let g = |x: &dyn HistoryView| -> exprk::Result<f64> { Ok(x.eval(-1.0)?[0].sin()) };
    let plain: Rhs = Arc::new(move |_, x| Ok(vec![-5.0 * x.eval(0.0)?[0] + g(x)?]));
    let split: Rhs = Arc::new(move |_, x| Ok(vec![g(x)?]));
    let phi: TimeFn = Arc::new(|t| vec![1.0 + t]);
    let make = |dynamics| Problem {
        name: "split".into(),
        tau: 1.0,
        dim: 1,
        dynamics,
        initial: phi.clone(),
        exact: None,
        mesh_offsets: vec![-1.0],
        components: vec!["x".into()],
    };
    let a = make(Dynamics::Dde(plain));
    let b = make(Dynamics::SemilinearDde { linear: DMatrix::from_element(1, 1, -5.0), rhs: split });
    let t = builtin("expo3").unwrap();
    let end = |p: &Problem| exprk::integrate(p, &t, 1e-3, 2.0, |_, _| {}).unwrap().current().unwrap()[0];
    assert!((end(&a) - end(&b)).abs() < 1e-8);
}
