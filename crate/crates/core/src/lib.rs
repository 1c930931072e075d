//! Penalized singular Abreu scheme in one dimension.
//!
//! Solves the fourth-order second boundary value problem
//! `ε (1/u'')'' = f_ε` on `(-1, 1)` by damped Newton continuation in `ε`,
//! and checks the limit against a direct interior-point minimizer of
//! `∫_a^b F(x, v, v')` over convex `v` that agree with an obstacle `φ`
//! outside `(a, b)`.
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the double-precision instantiation.

pub mod banded;
pub mod cone;
pub mod diagnostics;
pub mod grid;
pub mod lagrangian;
pub mod penalized;
mod poly;
mod scalar;
pub mod weak_form;

pub use cone::{
    check_admissibility, eval_j, minimize_direct, Admissibility, ConeError, ConeProblem,
    MinimizeOptions, MinimizeResult,
};
pub use diagnostics::{
    check_theorem_bounds, compute_report, fit_pairs, fit_rate, BoundCheck, BoundCheckSummary,
    BoundPolicy, DiagnosticsError, EstimateReport, Field, RateFit, RateOutcome,
};
pub use grid::{Grid, GridError};
pub use lagrangian::{
    validate_conditions, LagrangianError, LagrangianSpec, SampleBox, ValidationReport,
};
pub use penalized::{
    continuation_sweep, eval_j_eps, jacobian, newton_solve, penalty_l2, residual, source_values,
    EpsSchedule, NewtonOptions, ProblemSetup, SetupError, SolveFailure, SolveResult, SolverError,
    SweepResult,
};
pub use poly::Polynomial;
pub use scalar::{max_abs, max_abs_diff, Scalar};
pub use weak_form::{
    distributional_residual, rescaled_w, TestFunctionFamily, WeakFormError, WeakResidual,
};

pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type LagrangianSpec64 = LagrangianSpec<f64>;
pub type ProblemSetup64 = ProblemSetup<f64>;
pub type SolveResult64 = SolveResult<f64>;
pub type ConeProblem64 = ConeProblem<f64>;
pub type MinimizeResult64 = MinimizeResult<f64>;
pub type TestFunctionFamily64 = TestFunctionFamily<f64>;
