//! Split Lagrangians `F(x, z, p) = F0(x, z) + F1(x, p)` with analytic
//! partial derivatives, presets, and a sampling-based checker for the
//! structural hypotheses (convexity in `z` and `p`, growth of `F1_px`).

use crate::{Polynomial, Scalar};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// A function of two real arguments.
pub type Fn2<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
/// A scalar majorant of one nonnegative argument.
pub type Fn1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagrangianError {
    #[error("negative weight eta0({x}) = {value} at node {node}")]
    NegativeWeight { node: usize, x: f64, value: f64 },
}

/// Split Lagrangian with every partial the scheme needs.
///
/// `f1_pxp = ∂_p F1_px` and `f1_ppp = ∂_p F1_pp` enter only the Newton
/// Jacobian. When absent they are replaced by central differences of
/// `f1_px` and `f1_pp`.
#[derive(Clone)]
pub struct LagrangianSpec<T> {
    pub name: String,
    pub f0: Fn2<T>,
    pub f0_z: Fn2<T>,
    pub f0_zz: Fn2<T>,
    pub f1: Fn2<T>,
    pub f1_p: Fn2<T>,
    pub f1_pp: Fn2<T>,
    pub f1_px: Fn2<T>,
    pub f1_pxp: Option<Fn2<T>>,
    pub f1_ppp: Option<Fn2<T>>,
    /// Constant in `|F1_px(x, p)| <= dstar (1 + |p|)`.
    pub dstar: T,
    /// Majorant of `|F0| + |F0_z|` in `|z|`.
    pub eta: Option<Fn1<T>>,
    /// Majorant of `|F1_p| + |F1_pp|` in `|p|`.
    pub eta1: Option<Fn1<T>>,
    /// Majorant of `|F0_zz|` in `|z|`.
    pub eta2: Option<Fn1<T>>,
}

impl<T> fmt::Debug for LagrangianSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianSpec")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

fn fd_step<T: Scalar>(p: T) -> T {
    T::epsilon().cbrt() * (T::one() + p.abs())
}

impl<T: Scalar> LagrangianSpec<T> {
    /// `F(x, z, p)`.
    pub fn eval(&self, x: T, z: T, p: T) -> T {
        (self.f0)(x, z) + (self.f1)(x, p)
    }

    pub fn d_p_f1_px(&self, x: T, p: T) -> T {
        match &self.f1_pxp {
            Some(f) => f(x, p),
            None => {
                let d = fd_step(p);
                ((self.f1_px)(x, p + d) - (self.f1_px)(x, p - d)) / (d + d)
            }
        }
    }

    pub fn d_p_f1_pp(&self, x: T, p: T) -> T {
        match &self.f1_ppp {
            Some(f) => f(x, p),
            None => {
                let d = fd_step(p);
                ((self.f1_pp)(x, p + d) - (self.f1_pp)(x, p - d)) / (d + d)
            }
        }
    }

    /// `F ≡ 0`: the pure obstacle-penalty problem.
    pub fn zero() -> Self {
        let z: Fn2<T> = Arc::new(|_, _| T::zero());
        Self {
            name: "zero".into(),
            f0: z.clone(),
            f0_z: z.clone(),
            f0_zz: z.clone(),
            f1: z.clone(),
            f1_p: z.clone(),
            f1_pp: z.clone(),
            f1_px: z.clone(),
            f1_pxp: Some(z.clone()),
            f1_ppp: Some(z),
            dstar: T::zero(),
            eta: Some(Arc::new(|_| T::zero())),
            eta1: Some(Arc::new(|_| T::zero())),
            eta2: Some(Arc::new(|_| T::zero())),
        }
    }

    /// Rochet–Choné monopolist Lagrangian `(p²/2 - p x + z) η0(x)` with
    /// `F0 = z η0` and `F1 = (p²/2 - p x) η0`.
    ///
    /// The weight must be nonnegative at every entry of `nodes`.
    pub fn rochet_chone(eta0: &Polynomial<T>, nodes: &[T]) -> Result<Self, LagrangianError> {
        for (node, &x) in nodes.iter().enumerate() {
            let value = eta0.eval(x);
            if value < T::zero() {
                return Err(LagrangianError::NegativeWeight {
                    node,
                    x: x.as_f64(),
                    value: value.as_f64(),
                });
            }
        }
        let e0 = Arc::new(eta0.clone());
        let e1 = Arc::new(eta0.derivative());
        let half = T::lit(0.5);

        // |F1_px| <= |p - x| |η0'| + |η0| <= (sup|η0| + sup|η0'|)(1 + |p|) on [-1, 1]
        let dstar = e0.abs_bound_unit_interval() + e1.abs_bound_unit_interval();
        let sup0 = e0.abs_bound_unit_interval();

        let (a, b, c, d, e, f, g, k) = (
            e0.clone(),
            e0.clone(),
            e0.clone(),
            e0.clone(),
            e0.clone(),
            e1.clone(),
            e1.clone(),
            e0,
        );
        Ok(Self {
            name: "rochet_chone".into(),
            f0: Arc::new(move |x, z| z * a.eval(x)),
            f0_z: Arc::new(move |x, _| b.eval(x)),
            f0_zz: Arc::new(|_, _| T::zero()),
            f1: Arc::new(move |x, p| (half * p * p - p * x) * c.eval(x)),
            f1_p: Arc::new(move |x, p| (p - x) * d.eval(x)),
            f1_pp: Arc::new(move |x, _| e.eval(x)),
            f1_px: Arc::new(move |x, p| (p - x) * f.eval(x) - k.eval(x)),
            f1_pxp: Some(Arc::new(move |x, _| g.eval(x))),
            f1_ppp: Some(Arc::new(|_, _| T::zero())),
            dstar,
            eta: Some(Arc::new(move |z| sup0 * (z + T::one()))),
            eta1: Some(Arc::new(move |p| sup0 * (p + T::lit(2.0)))),
            eta2: Some(Arc::new(|_| T::zero())),
        })
    }

    /// `F0 = η0 z²/2`, `F1 = p²/2`: a strictly convex tracking functional.
    pub fn quadratic_tracking(eta0: &Polynomial<T>, nodes: &[T]) -> Result<Self, LagrangianError> {
        for (node, &x) in nodes.iter().enumerate() {
            let value = eta0.eval(x);
            if value < T::zero() {
                return Err(LagrangianError::NegativeWeight {
                    node,
                    x: x.as_f64(),
                    value: value.as_f64(),
                });
            }
        }
        let (a, b, c) = (
            Arc::new(eta0.clone()),
            Arc::new(eta0.clone()),
            Arc::new(eta0.clone()),
        );
        let sup0 = eta0.abs_bound_unit_interval();
        let half = T::lit(0.5);
        Ok(Self {
            name: "quadratic_tracking".into(),
            f0: Arc::new(move |x, z| half * z * z * a.eval(x)),
            f0_z: Arc::new(move |x, z| z * b.eval(x)),
            f0_zz: Arc::new(move |x, _| c.eval(x)),
            f1: Arc::new(move |_, p| half * p * p),
            f1_p: Arc::new(|_, p| p),
            f1_pp: Arc::new(|_, _| T::one()),
            f1_px: Arc::new(|_, _| T::zero()),
            f1_pxp: Some(Arc::new(|_, _| T::zero())),
            f1_ppp: Some(Arc::new(|_, _| T::zero())),
            dstar: T::zero(),
            eta: Some(Arc::new(move |z| sup0 * (half * z * z + z))),
            eta1: Some(Arc::new(|p| p + T::one())),
            eta2: Some(Arc::new(move |_| sup0)),
        })
    }
}

/// Axis-aligned sampling box for [`validate_conditions`].
#[derive(Debug, Clone, Copy)]
pub struct SampleBox<T> {
    pub x: (T, T),
    pub z: (T, T),
    pub p: (T, T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `F0_zz >= 0`.
    ConvexInZ,
    /// `F1_pp >= 0`.
    ConvexInP,
    /// `|F1_px| <= D* (1 + |p|)`.
    GrowthF1px,
    /// `|F0| + |F0_z| <= η(|z|)`.
    GrowthEta,
    /// `|F1_p| + |F1_pp| <= η1(|p|)`.
    GrowthEta1,
    /// `|F0_zz| <= η2(|z|)`.
    GrowthEta2,
    DerivF0z,
    DerivF0zz,
    DerivF1p,
    DerivF1pp,
    DerivF1px,
}

/// Worst violation of one condition with the witness point `(x, z or p)`.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub x: f64,
    pub arg: f64,
    pub amount: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub samples_per_axis: usize,
    pub violations: Vec<Violation>,
    /// Largest relative mismatch between a supplied derivative and its
    /// central finite difference.
    pub max_derivative_mismatch: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation(&self, c: Condition) -> Option<&Violation> {
        self.violations.iter().find(|v| v.condition == c)
    }

    fn record(&mut self, condition: Condition, x: f64, arg: f64, amount: f64) {
        if amount <= ROUNDOFF_SLACK {
            return;
        }
        match self
            .violations
            .iter_mut()
            .find(|v| v.condition == condition)
        {
            Some(v) if v.amount >= amount => {}
            Some(v) => {
                *v = Violation {
                    condition,
                    x,
                    arg,
                    amount,
                }
            }
            None => self.violations.push(Violation {
                condition,
                x,
                arg,
                amount,
            }),
        }
    }
}

// absorbs roundoff when a majorant is attained exactly
const ROUNDOFF_SLACK: f64 = 1e-12;

/// Relative tolerance for derivative consistency checks.
pub const DERIVATIVE_RTOL: f64 = 1e-5;
const DERIVATIVE_STEP: f64 = 1e-5;

fn axis(lo: f64, hi: f64, samples: usize) -> impl Iterator<Item = f64> {
    let m = samples.max(2) - 1;
    (0..=m).map(move |k| lo + (hi - lo) * k as f64 / m as f64)
}

/// Samples the structural hypotheses on a `samples x samples` lattice in
/// each of the `(x, z)` and `(x, p)` planes. Checks run in `f64`.
///
/// Derivative consistency uses central differences with step `1e-5` and
/// flags relative mismatches (denominator `max(1, |exact|)`) above
/// [`DERIVATIVE_RTOL`].
pub fn validate_conditions(
    spec: &LagrangianSpec<f64>,
    bx: SampleBox<f64>,
    samples: usize,
) -> ValidationReport {
    let samples = samples.max(100);
    let mut rep = ValidationReport {
        samples_per_axis: samples,
        ..Default::default()
    };
    let step = DERIVATIVE_STEP;
    let fd = |f: &Fn2<f64>, x: f64, y: f64| (f(x, y + step) - f(x, y - step)) / (2.0 * step);
    let mismatch = |rep: &mut ValidationReport, c, x: f64, y: f64, exact: f64, approx: f64| {
        let rel = (exact - approx).abs() / exact.abs().max(1.0);
        rep.max_derivative_mismatch = rep.max_derivative_mismatch.max(rel);
        rep.record(c, x, y, rel - DERIVATIVE_RTOL);
    };

    for x in axis(bx.x.0, bx.x.1, samples) {
        for z in axis(bx.z.0, bx.z.1, samples) {
            let zz = (spec.f0_zz)(x, z);
            rep.record(Condition::ConvexInZ, x, z, -zz);
            if let Some(eta) = &spec.eta {
                let lhs = (spec.f0)(x, z).abs() + (spec.f0_z)(x, z).abs();
                rep.record(Condition::GrowthEta, x, z, lhs - eta(z.abs()));
            }
            if let Some(eta2) = &spec.eta2 {
                rep.record(Condition::GrowthEta2, x, z, zz.abs() - eta2(z.abs()));
            }
            mismatch(
                &mut rep,
                Condition::DerivF0z,
                x,
                z,
                (spec.f0_z)(x, z),
                fd(&spec.f0, x, z),
            );
            mismatch(
                &mut rep,
                Condition::DerivF0zz,
                x,
                z,
                zz,
                fd(&spec.f0_z, x, z),
            );
        }
        for p in axis(bx.p.0, bx.p.1, samples) {
            let pp = (spec.f1_pp)(x, p);
            let px = (spec.f1_px)(x, p);
            rep.record(Condition::ConvexInP, x, p, -pp);
            rep.record(
                Condition::GrowthF1px,
                x,
                p,
                px.abs() - spec.dstar * (1.0 + p.abs()),
            );
            if let Some(eta1) = &spec.eta1 {
                let lhs = (spec.f1_p)(x, p).abs() + pp.abs();
                rep.record(Condition::GrowthEta1, x, p, lhs - eta1(p.abs()));
            }
            mismatch(
                &mut rep,
                Condition::DerivF1p,
                x,
                p,
                (spec.f1_p)(x, p),
                fd(&spec.f1, x, p),
            );
            mismatch(
                &mut rep,
                Condition::DerivF1pp,
                x,
                p,
                pp,
                fd(&spec.f1_p, x, p),
            );
            let fx = ((spec.f1_p)(x + step, p) - (spec.f1_p)(x - step, p)) / (2.0 * step);
            mismatch(&mut rep, Condition::DerivF1px, x, p, px, fx);
        }
    }
    rep
}
