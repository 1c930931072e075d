//! Second boundary value problem for the penalized singular Abreu equation
//!
//! ```text
//! ε w'' = f_ε,  w = 1/u''  in (-1, 1),   u(±1) = 0,  w(±1) = ρ±
//! f_ε = (u - φ)/ε                             outside (a, b)
//!     = F0_z(x,u) - F1_px(x,u') - F1_pp(x,u') u''  inside (a, b)
//! ```
//!
//! The unknowns are the nodal values of `u`; `w` is always derived as
//! `1/d2(u)`. Rows `0` and `n` are the Dirichlet conditions, rows `1` and
//! `n - 1` carry `w(±1) = ρ±`, and rows `2..=n-2` the equation itself, so
//! the Jacobian is pentadiagonal.

use crate::banded::{BandedError, BandedMatrix};
use crate::cone::eval_j;
use crate::grid::{Grid, GridError};
use crate::{max_abs, LagrangianSpec, Polynomial, Scalar};
use log::debug;
use serde::Serialize;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Tolerance on `|φ(±1)|`.
pub const PHI_BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("obstacle must vanish at ±1 (ρ± > 0 aside): φ(-1) = {left}, φ(1) = {right}")]
    PhiBoundary { left: f64, right: f64 },
    #[error("obstacle not uniformly convex: φ''({x}) = {value} at node {node}")]
    PhiNotConvex { node: usize, x: f64, value: f64 },
    #[error("boundary data must satisfy ρ± > 0: ρ- = {rho_minus}, ρ+ = {rho_plus}")]
    BadRho { rho_minus: f64, rho_plus: f64 },
    #[error("penalization parameter must lie in (0, 1), got {0}")]
    BadEps(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("iterate is not uniformly convex: d2(u) = {value} at node {node}")]
    NonconvexIterate { node: usize, value: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("ε schedule must be nonempty, strictly decreasing and inside (0, 1): {0}")]
    Schedule(String),
}

/// Everything that defines one instance of the penalized problem.
#[derive(Debug, Clone)]
pub struct ProblemSetup<T> {
    pub grid: Grid<T>,
    pub lagrangian: LagrangianSpec<T>,
    pub phi_poly: Polynomial<T>,
    pub phi: Vec<T>,
    pub phi_p: Vec<T>,
    pub phi_pp: Vec<T>,
    pub rho_minus: T,
    pub rho_plus: T,
    pub eps: T,
    /// `min_i φ''(x_i)`, positive.
    pub c0: T,
}

impl<T: Scalar> ProblemSetup<T> {
    pub fn new(
        grid: Grid<T>,
        lagrangian: LagrangianSpec<T>,
        phi_poly: Polynomial<T>,
        rho_minus: T,
        rho_plus: T,
        eps: T,
    ) -> Result<Self, SetupError> {
        let dphi = phi_poly.derivative();
        let ddphi = dphi.derivative();
        let phi = grid.sample(|x| phi_poly.eval(x));
        let phi_p = grid.sample(|x| dphi.eval(x));
        let phi_pp = grid.sample(|x| ddphi.eval(x));
        let n = grid.n();
        let tol = T::lit(PHI_BOUNDARY_TOL);
        if phi[0].abs() > tol || phi[n].abs() > tol {
            return Err(SetupError::PhiBoundary {
                left: phi[0].as_f64(),
                right: phi[n].as_f64(),
            });
        }
        let mut c0 = T::infinity();
        for (node, &v) in phi_pp.iter().enumerate() {
            if !(v > T::zero()) {
                return Err(SetupError::PhiNotConvex {
                    node,
                    x: grid.x(node).as_f64(),
                    value: v.as_f64(),
                });
            }
            c0 = c0.min(v);
        }
        if !(rho_minus > T::zero() && rho_plus > T::zero()) {
            return Err(SetupError::BadRho {
                rho_minus: rho_minus.as_f64(),
                rho_plus: rho_plus.as_f64(),
            });
        }
        let setup = Self {
            grid,
            lagrangian,
            phi_poly,
            phi,
            phi_p,
            phi_pp,
            rho_minus,
            rho_plus,
            eps: T::lit(0.5),
            c0,
        };
        setup.with_eps(eps)
    }

    /// Same problem at another penalization parameter.
    pub fn with_eps(&self, eps: T) -> Result<Self, SetupError> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(SetupError::BadEps(eps.as_f64()));
        }
        Ok(Self {
            eps,
            ..self.clone()
        })
    }

    fn check_len(&self, u: &[T]) -> Result<(), SolverError> {
        if u.len() != self.grid.n() + 1 {
            return Err(GridError::LengthMismatch {
                expected: self.grid.n() + 1,
                got: u.len(),
            }
            .into());
        }
        Ok(())
    }

    /// `d2(u)`, failing on the first node where it is not positive.
    pub fn convex_second_derivative(&self, u: &[T]) -> Result<Vec<T>, SolverError> {
        self.check_len(u)?;
        let s = self.grid.d2(u)?;
        if let Some((node, &value)) = s.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
            return Err(SolverError::NonconvexIterate {
                node,
                value: value.as_f64(),
            });
        }
        Ok(s)
    }

    /// Right-hand side `f_ε` at node `i` given `s = d2(u)`.
    pub fn source_at(&self, u: &[T], s: &[T], i: usize) -> T {
        let g = &self.grid;
        if g.in_window(i) {
            let lag = &self.lagrangian;
            let (x, p) = (g.x(i), g.d1_at(u, i));
            (lag.f0_z)(x, u[i]) - (lag.f1_px)(x, p) - (lag.f1_pp)(x, p) * s[i]
        } else {
            (u[i] - self.phi[i]) / self.eps
        }
    }

    /// Default Newton tolerance `scale · (1 + 1/ε)`.
    pub fn newton_tol(&self, scale: T) -> T {
        scale * (T::one() + T::one() / self.eps)
    }

    /// Attainable accuracy of the rows `ε d2(1/d2(u))` at the iterate `u`
    /// with `s = d2(u)`: a relative error `δ` in `u` perturbs them by about
    /// `4 δ ε |u| / (h⁴ min s²)`.
    pub fn roundoff_floor(&self, u: &[T], s: &[T]) -> T {
        let h2 = self.grid.h() * self.grid.h();
        let smin = s.iter().copied().fold(T::infinity(), T::min);
        let scale = T::one() + max_abs(u);
        T::lit(4.0) * T::epsilon() * self.eps * scale / (h2 * h2 * smin * smin)
    }

    pub fn convexity_floor(&self, scale: T) -> T {
        scale * self.eps * self.c0
    }
}

/// Residual of the discrete system; see the module docs for the row layout.
pub fn residual<T: Scalar>(u: &[T], setup: &ProblemSetup<T>) -> Result<Vec<T>, SolverError> {
    let s = setup.convex_second_derivative(u)?;
    Ok(residual_with(u, &s, setup))
}

fn residual_with<T: Scalar>(u: &[T], s: &[T], setup: &ProblemSetup<T>) -> Vec<T> {
    let g = &setup.grid;
    let n = g.n();
    let h2 = g.h() * g.h();
    let two = T::lit(2.0);
    let w: Vec<T> = s.iter().map(|&v| T::one() / v).collect();
    let mut r = vec![T::zero(); n + 1];
    r[0] = u[0];
    r[n] = u[n];
    r[1] = w[0] - setup.rho_minus;
    r[n - 1] = w[n] - setup.rho_plus;
    for i in 2..=n - 2 {
        let wpp = (w[i + 1] - two * w[i] + w[i - 1]) / h2;
        r[i] = setup.eps * wpp - setup.source_at(u, s, i);
    }
    r
}

/// Analytic Jacobian of [`residual`]: bandwidth 2 on each side.
pub fn jacobian<T: Scalar>(
    u: &[T],
    setup: &ProblemSetup<T>,
) -> Result<BandedMatrix<T>, SolverError> {
    let s = setup.convex_second_derivative(u)?;
    Ok(jacobian_with(u, &s, setup))
}

fn jacobian_with<T: Scalar>(u: &[T], s: &[T], setup: &ProblemSetup<T>) -> BandedMatrix<T> {
    let g = &setup.grid;
    let n = g.n();
    let h2 = g.h() * g.h();
    let eps = setup.eps;
    let lag = &setup.lagrangian;
    let mut jac = BandedMatrix::zeros(n + 1, 2, 2);

    jac.set(0, 0, T::one());
    jac.set(n, n, T::one());
    for (row, node) in [(1, 0), (n - 1, n)] {
        let (first, c) = g.d2_stencil(node);
        let inv2 = T::one() / (s[node] * s[node]);
        for (k, &ck) in c.iter().enumerate() {
            jac.set(row, first + k, -ck * inv2);
        }
    }

    let lap = [T::one(), T::lit(-2.0), T::one()];
    for i in 2..=n - 2 {
        // ε d2(w): each w_j = 1/s_j with s_j the central stencil at j
        for (dj, &aj) in lap.iter().enumerate() {
            let j = i + dj - 1;
            let coeff = eps * aj / h2;
            let inv2 = T::one() / (s[j] * s[j]);
            for (dm, &cm) in lap.iter().enumerate() {
                jac.add(i, j + dm - 1, -coeff * cm / h2 * inv2);
            }
        }
        // -∂f_ε
        if g.in_window(i) {
            let (x, p) = (g.x(i), g.d1_at(u, i));
            jac.add(i, i, -(lag.f0_zz)(x, u[i]));
            let dfdp = lag.d_p_f1_px(x, p) + lag.d_p_f1_pp(x, p) * s[i];
            let (first, c1) = g.d1_stencil(i);
            for (k, &ck) in c1.iter().enumerate() {
                if ck != T::zero() {
                    jac.add(i, first + k, dfdp * ck);
                }
            }
            let fpp = (lag.f1_pp)(x, p);
            for (dm, &cm) in lap.iter().enumerate() {
                jac.add(i, i + dm - 1, fpp * cm / h2);
            }
        } else {
            jac.add(i, i, -T::one() / eps);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Absolute max-norm tolerance, taken literally. `None` means
    /// `tol_scale · (1 + 1/ε)` raised by the roundoff floor of the current
    /// iterate, which dominates on fine grids at large ε.
    pub tol: Option<T>,
    pub tol_scale: T,
    pub max_iters: usize,
    /// Steps that push `min d2(u)` below `floor_scale · ε · c0` are halved.
    pub convexity_floor_scale: T,
    pub max_halvings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol: None,
            tol_scale: T::lit(1e-10),
            max_iters: 200,
            convexity_floor_scale: T::lit(1e-3),
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveFailure {
    /// No damped step decreased the residual; the step fell below
    /// `2^-max_halvings` of the Newton direction.
    LineSearchStalled {
        iteration: usize,
    },
    MaxIterations,
    /// The linearized system could not be factored.
    SingularJacobian {
        column: usize,
    },
}

/// Outcome of one Newton solve at fixed ε.
#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub eps: T,
    pub u: Vec<T>,
    /// `w_i = 1 / d2(u)_i`.
    pub w: Vec<T>,
    pub newton_iters: usize,
    /// Max-norm residual of every iterate, starting with the initial guess.
    pub residual_norms: Vec<T>,
    /// Tolerance in force at the final iterate.
    pub tol: T,
    pub converged: bool,
    /// `min_i d2(u)_i` over all nodes.
    pub min_upp: T,
    pub failure: Option<SolveFailure>,
    pub elapsed: Duration,
}

impl<T: Scalar> SolveResult<T> {
    pub fn final_residual(&self) -> T {
        *self.residual_norms.last().expect("at least one residual")
    }
}

/// Damped Newton iteration from `u0`, which must be uniformly convex.
///
/// Boundary values are reset to zero before the first step and after every
/// update. Failure to converge is reported in the result, not as an error.
pub fn newton_solve<T: Scalar>(
    setup: &ProblemSetup<T>,
    u0: &[T],
    opts: &NewtonOptions<T>,
) -> Result<SolveResult<T>, SolverError> {
    let start = Instant::now();
    let n = setup.grid.n();
    let mut u = u0.to_vec();
    setup.check_len(&u)?;
    u[0] = T::zero();
    u[n] = T::zero();
    let mut s = setup.convex_second_derivative(&u)?;
    let mut r = residual_with(&u, &s, setup);
    let mut norm = max_abs(&r);
    let tol_at = |u: &[T], s: &[T]| match opts.tol {
        Some(t) => t,
        None => setup.newton_tol(opts.tol_scale) + setup.roundoff_floor(u, s),
    };
    let mut tol = tol_at(&u, &s);
    let floor = setup.convexity_floor(opts.convexity_floor_scale);
    let mut norms = vec![norm];
    let mut iters = 0;
    let mut failure = None;

    while norm > tol {
        if iters == opts.max_iters {
            failure = Some(SolveFailure::MaxIterations);
            break;
        }
        let jac = jacobian_with(&u, &s, setup);
        let rhs: Vec<T> = r.iter().map(|&v| -v).collect();
        let step = match jac.factor().and_then(|lu| lu.solve(&rhs)) {
            Ok(d) => d,
            Err(BandedError::Singular { col }) => {
                failure = Some(SolveFailure::SingularJacobian { column: col });
                break;
            }
            Err(e) => unreachable!("{e}"),
        };

        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial: Vec<T> = u.iter().zip(&step).map(|(&a, &d)| a + alpha * d).collect();
            trial[0] = T::zero();
            trial[n] = T::zero();
            let ts = setup.grid.d2(&trial)?;
            if ts.iter().all(|&v| v > floor) {
                let tr = residual_with(&trial, &ts, setup);
                let tn = max_abs(&tr);
                if tn.is_finite() && tn < norm {
                    accepted = Some((trial, ts, tr, tn));
                    break;
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        match accepted {
            Some((nu, ns, nr, nn)) => {
                u = nu;
                s = ns;
                r = nr;
                norm = nn;
                tol = tol_at(&u, &s);
                iters += 1;
                norms.push(norm);
                debug!(
                    "eps={} iter={} |R|={:e} alpha={}",
                    setup.eps,
                    iters,
                    norm.as_f64(),
                    alpha
                );
            }
            None => {
                failure = Some(SolveFailure::LineSearchStalled { iteration: iters });
                break;
            }
        }
    }

    let min_upp = s.iter().copied().fold(T::infinity(), T::min);
    Ok(SolveResult {
        eps: setup.eps,
        w: s.iter().map(|&v| T::one() / v).collect(),
        u,
        newton_iters: iters,
        residual_norms: norms,
        tol,
        converged: failure.is_none(),
        min_upp,
        failure,
        elapsed: start.elapsed(),
    })
}

/// ε schedule: geometric `start · ratio^k` or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsSchedule<T> {
    Geometric { start: T, ratio: T, stages: usize },
    Explicit(Vec<T>),
}

impl<T: Scalar> EpsSchedule<T> {
    /// Eleven stages `0.1 · 2^-k`, ending just below `1e-4`.
    pub fn default_sweep() -> Self {
        Self::Geometric {
            start: T::lit(0.1),
            ratio: T::lit(0.5),
            stages: 11,
        }
    }

    pub fn values(&self) -> Vec<T> {
        match self {
            Self::Geometric {
                start,
                ratio,
                stages,
            } => (0..*stages)
                .map(|k| *start * ratio.powi(k as i32))
                .collect(),
            Self::Explicit(v) => v.clone(),
        }
    }

    pub fn validate(&self) -> Result<Vec<T>, SolverError> {
        let v = self.values();
        if v.is_empty() {
            return Err(SolverError::Schedule("empty".into()));
        }
        if let Some(e) = v.iter().find(|&&e| !(e > T::zero() && e < T::one())) {
            return Err(SolverError::Schedule(format!("value {e} outside (0, 1)")));
        }
        if let Some(k) = v.windows(2).position(|p| !(p[1] < p[0])) {
            return Err(SolverError::Schedule(format!(
                "not strictly decreasing at stage {}",
                k + 1
            )));
        }
        Ok(v)
    }
}

/// A non-converged stage that ended a sweep.
#[derive(Debug, Clone)]
pub struct StageFailure<T> {
    pub index: usize,
    pub result: SolveResult<T>,
}

#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    /// Converged stages in schedule order.
    pub stages: Vec<SolveResult<T>>,
    pub failure: Option<StageFailure<T>>,
}

impl<T: Scalar> SweepResult<T> {
    pub fn all_converged(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> Option<&SolveResult<T>> {
        self.stages.last()
    }
}

/// Solves along a decreasing ε schedule, warm-starting each stage from the
/// previous converged `u`. The first stage starts from `φ`.
pub fn continuation_sweep<T: Scalar>(
    base: &ProblemSetup<T>,
    schedule: &EpsSchedule<T>,
    opts: &NewtonOptions<T>,
) -> Result<SweepResult<T>, SolverError> {
    let eps_values = schedule.validate()?;
    let mut u = base.phi.clone();
    let mut stages = Vec::with_capacity(eps_values.len());
    for (index, &eps) in eps_values.iter().enumerate() {
        let setup = base.with_eps(eps)?;
        let result = newton_solve(&setup, &u, opts)?;
        if !result.converged {
            return Ok(SweepResult {
                stages,
                failure: Some(StageFailure { index, result }),
            });
        }
        u.clone_from(&result.u);
        stages.push(result);
    }
    Ok(SweepResult {
        stages,
        failure: None,
    })
}

/// Discrete penalized functional
/// `J(u) - ε ∫_{-1}^{1} log u'' + (1/2ε) ∫_{(-1,a)∪(b,1)} (u - φ)²`.
pub fn eval_j_eps<T: Scalar>(u: &[T], setup: &ProblemSetup<T>) -> Result<T, SolverError> {
    let s = setup.convex_second_derivative(u)?;
    let g = &setup.grid;
    let n = g.n();
    let logs: Vec<T> = s.iter().map(|v| v.ln()).collect();
    let log_term = g.integrate(&logs, 0, n)?;
    let j = eval_j(u, g, &setup.lagrangian)?;
    Ok(j - setup.eps * log_term + penalty_l2(u, setup)? / (T::lit(2.0) * setup.eps))
}

/// `∫_{(-1,a)∪(b,1)} (u - φ)²` by the trapezoid rule on each piece.
pub fn penalty_l2<T: Scalar>(u: &[T], setup: &ProblemSetup<T>) -> Result<T, GridError> {
    let g = &setup.grid;
    let sq: Vec<T> = u
        .iter()
        .zip(&setup.phi)
        .map(|(&a, &b)| (a - b) * (a - b))
        .collect();
    Ok(g.integrate(&sq, 0, g.ia())? + g.integrate(&sq, g.ib(), g.n())?)
}

/// `f_ε` at every node (penalty branch at `±1`), for output tables.
pub fn source_values<T: Scalar>(u: &[T], setup: &ProblemSetup<T>) -> Result<Vec<T>, SolverError> {
    let s = setup.convex_second_derivative(u)?;
    Ok((0..u.len()).map(|i| setup.source_at(u, &s, i)).collect())
}
