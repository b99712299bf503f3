//! Explicit exponential Runge–Kutta methods for delay differential equations,
//! renewal equations and coupled systems of both.
//!
//! States are histories on `[-tau, 0]` stored as piecewise cubics on a
//! uniform mesh. A step forms stage histories from the shifted state and
//! appends one new cell.
//!
//! ```
//! use exprk::{integrate, problems, tableau};
//!
//! let problem = problems::belzen(1.0);
//! let method = tableau::builtin("heun").unwrap();
//! let end = integrate(&problem, &method, 0.01, 2.0, |_, _| {}).unwrap();
//! let x = end.current().unwrap()[0];
//! assert!(x.abs() < 1e-3);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod history;
pub mod phi;
pub mod problems;
pub mod quadrature;
pub mod stepper;
pub mod tableau;

pub use error::{Error, Result};
pub use history::{HistoryKind, HistorySegment, HistoryState, HistoryView, Norm, StageView};
pub use phi::{phi_matrix_action, phi_scalar, PhiCombo, PhiTerm};
pub use stepper::{
    integrate, step_coupled, step_dde, step_re, step_semilinear_dde, Dynamics, Problem, ProblemKind, SystemState,
};
pub use tableau::{check_order, OrderMode, OrderReport, Tableau};
