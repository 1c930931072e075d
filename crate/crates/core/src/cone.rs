//! Direct minimization of `J(v) = ∫_a^b F(x, v, v') dx` over nodal functions
//! that equal `φ` outside `(a, b)` and are convex on all of `[-1, 1]`.
//!
//! The convexity constraints straddling `a` and `b` couple free and pinned
//! nodes; they carry the gradient restriction that distinguishes the
//! problem from a plain Dirichlet problem on `(a, b)`.
//!
//! `J` is discretized with the trapezoid rule for `F0(x, v)` and the cell
//! midpoint rule for `F1(x, v')` using cell slopes. Both the penalized
//! functional and this minimizer use the same [`eval_j`].

use crate::banded::{BandedError, BandedMatrix};
use crate::grid::{Grid, GridError};
use crate::penalized::ProblemSetup;
use crate::{max_abs, LagrangianSpec, Scalar};
use log::debug;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("starting point is not strictly convex at node {node} (d2 = {value})")]
    InfeasibleStart { node: usize, value: f64 },
    #[error("inner Newton failed at mu = {mu:e} after {iters} iterations, |grad| = {grad_norm:e}")]
    InnerNewtonFailure {
        mu: f64,
        iters: usize,
        grad_norm: f64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Discrete `J(v)` over the window `[a, b]`.
pub fn eval_j<T: Scalar>(v: &[T], grid: &Grid<T>, lag: &LagrangianSpec<T>) -> Result<T, GridError> {
    let (ia, ib) = (grid.ia(), grid.ib());
    let f0: Vec<T> = grid
        .nodes()
        .iter()
        .zip(v)
        .map(|(&x, &z)| (lag.f0)(x, z))
        .collect();
    let mids = grid.midpoints();
    let slopes = grid.cell_slopes(v)?;
    let f1: T = (ia..ib).map(|c| (lag.f1)(mids[c], slopes[c])).sum();
    Ok(grid.integrate(&f0, ia, ib)? + grid.h() * f1)
}

/// Minimization problem over the discrete convex cone anchored at `φ`.
#[derive(Debug, Clone)]
pub struct ConeProblem<T> {
    pub grid: Grid<T>,
    pub lagrangian: LagrangianSpec<T>,
    pub phi: Vec<T>,
}

impl<T: Scalar> ConeProblem<T> {
    pub fn new(
        grid: Grid<T>,
        lagrangian: LagrangianSpec<T>,
        phi: Vec<T>,
    ) -> Result<Self, ConeError> {
        if phi.len() != grid.n() + 1 {
            return Err(GridError::LengthMismatch {
                expected: grid.n() + 1,
                got: phi.len(),
            }
            .into());
        }
        Ok(Self {
            grid,
            lagrangian,
            phi,
        })
    }

    pub fn from_setup(setup: &ProblemSetup<T>) -> Self {
        Self {
            grid: setup.grid.clone(),
            lagrangian: setup.lagrangian.clone(),
            phi: setup.phi.clone(),
        }
    }

    /// Free node indices `ia + 1 ..= ib - 1`.
    pub fn free(&self) -> std::ops::Range<usize> {
        self.grid.ia() + 1..self.grid.ib()
    }

    /// Constraint nodes whose second difference involves a free node.
    fn coupled(&self) -> std::ops::RangeInclusive<usize> {
        self.grid.ia()..=self.grid.ib()
    }

    pub fn eval_j(&self, v: &[T]) -> Result<T, GridError> {
        eval_j(v, &self.grid, &self.lagrangian)
    }

    fn second_diff(&self, v: &[T], i: usize) -> T {
        let h = self.grid.h();
        (v[i - 1] - T::lit(2.0) * v[i] + v[i + 1]) / (h * h)
    }

    fn barrier_value(&self, v: &[T], mu: T) -> Option<T> {
        let mut acc = T::zero();
        for i in self.coupled() {
            let s = self.second_diff(v, i);
            if !(s > T::zero()) {
                return None;
            }
            acc = acc + s.ln();
        }
        Some(self.eval_j(v).ok()? - mu * acc)
    }

    /// Gradient of `J - μ Σ log s_i` with respect to the free nodes.
    fn barrier_gradient(&self, v: &[T], mu: T) -> Vec<T> {
        let g = &self.grid;
        let lag = &self.lagrangian;
        let h = g.h();
        let h2 = h * h;
        let mids = g.midpoints();
        let free = self.free();
        let fp = |c: usize| (lag.f1_p)(mids[c], (v[c + 1] - v[c]) / h);
        let mut grad: Vec<T> = free
            .clone()
            .map(|k| h * (lag.f0_z)(g.x(k), v[k]) + fp(k - 1) - fp(k))
            .collect();
        let lo = free.start;
        let stencil = [T::one(), T::lit(-2.0), T::one()];
        for i in self.coupled() {
            let inv_s = T::one() / self.second_diff(v, i);
            for (d, &c) in stencil.iter().enumerate() {
                let k = i + d - 1;
                if free.contains(&k) {
                    grad[k - lo] = grad[k - lo] - mu * inv_s * c / h2;
                }
            }
        }
        grad
    }

    fn barrier_hessian(&self, v: &[T], mu: T) -> BandedMatrix<T> {
        let g = &self.grid;
        let lag = &self.lagrangian;
        let h = g.h();
        let h2 = h * h;
        let mids = g.midpoints();
        let free = self.free();
        let lo = free.start;
        let m = free.len();
        let fpp = |c: usize| (lag.f1_pp)(mids[c], (v[c + 1] - v[c]) / h);
        let mut hess = BandedMatrix::zeros(m, 2, 2);
        for k in free.clone() {
            let r = k - lo;
            hess.add(
                r,
                r,
                h * (lag.f0_zz)(g.x(k), v[k]) + (fpp(k - 1) + fpp(k)) / h,
            );
            if k + 1 < free.end {
                let off = -fpp(k) / h;
                hess.add(r, r + 1, off);
                hess.add(r + 1, r, off);
            }
        }
        let stencil = [T::one(), T::lit(-2.0), T::one()];
        for i in self.coupled() {
            let s = self.second_diff(v, i);
            let wgt = mu / (s * s * h2 * h2);
            for (da, &ca) in stencil.iter().enumerate() {
                let ka = i + da - 1;
                if !free.contains(&ka) {
                    continue;
                }
                for (db, &cb) in stencil.iter().enumerate() {
                    let kb = i + db - 1;
                    if free.contains(&kb) {
                        hess.add(ka - lo, kb - lo, wgt * ca * cb);
                    }
                }
            }
        }
        hess
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<T> {
    pub mu_start: T,
    pub mu_end: T,
    /// Geometric reduction factor per barrier stage.
    pub mu_factor: T,
    /// Inner Newton stops once the barrier gradient max-norm is below this.
    pub grad_tol: T,
    pub max_inner: usize,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            mu_start: T::lit(1e-1),
            mu_end: T::lit(1e-9),
            mu_factor: T::lit(0.25),
            grad_tol: T::lit(1e-11),
            max_inner: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult<T> {
    pub v: Vec<T>,
    pub j_value: T,
    /// `max(|∇(J - μ Σ log s)|_∞, μ)` at the final barrier parameter; the
    /// second term is the per-constraint complementarity `λ_i s_i = μ`.
    pub kkt_residual: T,
    pub stationarity: T,
    /// Upper bound `μ · #constraints` on `J(v) - min J`.
    pub duality_gap: T,
    pub barrier_mu_final: T,
    pub iters: usize,
    /// `J` at the end of every barrier stage.
    pub stage_j: Vec<T>,
}

/// Log-barrier interior-point method started from `φ`.
pub fn minimize_direct<T: Scalar>(
    problem: &ConeProblem<T>,
    opts: &MinimizeOptions<T>,
) -> Result<MinimizeResult<T>, ConeError> {
    let mut v = problem.phi.clone();
    for i in problem.coupled() {
        let s = problem.second_diff(&v, i);
        if !(s > T::zero()) {
            return Err(ConeError::InfeasibleStart {
                node: i,
                value: s.as_f64(),
            });
        }
    }

    let free = problem.free();
    let lo = free.start;
    let mut mu = opts.mu_start;
    let mut total = 0;
    let mut stage_j = Vec::new();
    let stencil = [T::one(), T::lit(-2.0), T::one()];
    let h2 = problem.grid.h() * problem.grid.h();
    let armijo = T::lit(1e-4);

    loop {
        let mut iters = 0;
        let mut phi_val = problem.barrier_value(&v, mu).expect("interior iterate");
        let (mut best, mut stall) = (T::infinity(), 0);
        loop {
            let grad = problem.barrier_gradient(&v, mu);
            let gnorm = max_abs(&grad);
            if gnorm <= opts.grad_tol {
                break;
            }
            if gnorm < T::lit(0.5) * best {
                (best, stall) = (gnorm, 0);
            } else {
                stall += 1;
            }
            if iters == opts.max_inner {
                return Err(ConeError::InnerNewtonFailure {
                    mu: mu.as_f64(),
                    iters,
                    grad_norm: gnorm.as_f64(),
                });
            }
            let rhs: Vec<T> = grad.iter().map(|&g| -g).collect();
            let dir = problem
                .barrier_hessian(&v, mu)
                .factor()
                .and_then(|lu| lu.solve(&rhs))
                .map_err(|e: BandedError| {
                    debug!("barrier Hessian: {e}");
                    ConeError::InnerNewtonFailure {
                        mu: mu.as_f64(),
                        iters,
                        grad_norm: gnorm.as_f64(),
                    }
                })?;
            let mut full = vec![T::zero(); v.len()];
            for k in free.clone() {
                full[k] = dir[k - lo];
            }
            let slope: T = grad.iter().zip(&dir).map(|(&g, &d)| g * d).sum();
            let tiny_decrement = -slope <= T::lit(1e3) * T::epsilon() * (T::one() + phi_val.abs());
            if tiny_decrement && stall >= 3 {
                // the gradient has hit its roundoff floor
                break;
            }

            // fraction-to-boundary rule
            let mut alpha = T::one();
            for i in problem.coupled() {
                let ds: T = stencil
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| c * full[i + d - 1])
                    .sum::<T>()
                    / h2;
                if ds < T::zero() {
                    let s = problem.second_diff(&v, i);
                    alpha = alpha.min(T::lit(0.99) * (-s / ds));
                }
            }

            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<T> = v.iter().zip(&full).map(|(&a, &d)| a + alpha * d).collect();
                if let Some(tv) = problem.barrier_value(&trial, mu) {
                    // at the roundoff level of Φ only the gradient can certify progress
                    let ok = tv <= phi_val + armijo * alpha * slope
                        || (tiny_decrement
                            && max_abs(&problem.barrier_gradient(&trial, mu)) < gnorm);
                    if ok {
                        v = trial;
                        phi_val = tv;
                        accepted = true;
                        break;
                    }
                }
                alpha = alpha * T::lit(0.5);
            }
            iters += 1;
            if !accepted && tiny_decrement {
                break;
            }
            if !accepted {
                return Err(ConeError::InnerNewtonFailure {
                    mu: mu.as_f64(),
                    iters,
                    grad_norm: gnorm.as_f64(),
                });
            }
        }
        total += iters;
        stage_j.push(problem.eval_j(&v)?);
        debug!(
            "barrier mu={:e} inner={} J={}",
            mu.as_f64(),
            iters,
            stage_j.last().unwrap()
        );
        if mu <= opts.mu_end {
            break;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_end);
    }

    let stationarity = max_abs(&problem.barrier_gradient(&v, mu));
    let n_constraints = T::from_usize_lossy(problem.coupled().count());
    Ok(MinimizeResult {
        j_value: problem.eval_j(&v)?,
        kkt_residual: stationarity.max(mu),
        stationarity,
        duality_gap: mu * n_constraints,
        barrier_mu_final: mu,
        iters: total,
        stage_j,
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityDefect {
    Convexity,
    Pinning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// Largest violation amount (`0` when none).
    pub worst: f64,
    pub witness: Option<(usize, AdmissibilityDefect)>,
}

/// Checks `d2(v)_i >= -tol` at every interior node and `|v_i - φ_i| <= tol`
/// at every pinned node.
pub fn check_admissibility<T: Scalar>(v: &[T], problem: &ConeProblem<T>, tol: T) -> Admissibility {
    let g = &problem.grid;
    let n = g.n();
    let mut worst = T::zero();
    let mut witness = None;
    for i in 1..n {
        let defect = -problem.second_diff(v, i);
        if defect > worst {
            worst = defect;
            witness = Some((i, AdmissibilityDefect::Convexity));
        }
    }
    for i in (0..=g.ia()).chain(g.ib()..=n) {
        let defect = (v[i] - problem.phi[i]).abs();
        if defect > worst {
            worst = defect;
            witness = Some((i, AdmissibilityDefect::Pinning));
        }
    }
    Admissibility {
        admissible: worst <= tol,
        worst: worst.as_f64(),
        witness: if worst > tol { witness } else { None },
    }
}
