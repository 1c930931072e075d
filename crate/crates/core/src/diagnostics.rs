//! A priori estimates evaluated on computed solutions, and power-law fits
//! of how they scale with ε across a continuation sweep.
//!
//! The constants in the estimates are existential, so nothing here compares
//! against a formula: each bound is turned into a quantity that should stay
//! bounded (above or below) along the sweep, and its stability is checked.

use crate::cone::eval_j;
use crate::penalized::{eval_j_eps, penalty_l2, ProblemSetup, SolveResult, SolverError};
use crate::Scalar;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("stage at ε = {eps} did not converge")]
    NotConverged { eps: f64 },
    #[error("need at least {needed} converged stages, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{name} is not positive at ε = {eps} (value {value}); cannot fit a power law")]
    NonPositive { name: String, eps: f64, value: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Per-stage quantities; "ab" fields range over nodes strictly inside `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub eps: f64,
    pub sup_u: f64,
    pub sup_grad_ab: f64,
    pub min_upp_ab: f64,
    pub max_w_ab: f64,
    /// `∫_{(-1,a)∪(b,1)} (u - φ)²`.
    pub penalty_l2: f64,
    /// `(ε u'(-1), ε u'(1))` with one-sided differences.
    pub eps_times_uprime_bdry: (f64, f64),
    pub j_val: f64,
    pub j_eps_val: f64,
    /// `∫_{-1}^{1} 1/u''`.
    pub int_inv_upp: f64,
}

pub fn compute_report<T: Scalar>(
    result: &SolveResult<T>,
    setup: &ProblemSetup<T>,
) -> Result<EstimateReport, DiagnosticsError> {
    if !result.converged {
        return Err(DiagnosticsError::NotConverged {
            eps: result.eps.as_f64(),
        });
    }
    let setup = setup.with_eps(result.eps).map_err(SolverError::from)?;
    let g = &setup.grid;
    let n = g.n();
    let u = &result.u;
    let d1 = g.d1(u).map_err(SolverError::from)?;
    let s = setup.convex_second_derivative(u)?;
    let inside = || (0..=n).filter(|&i| g.in_window(i));
    let fold_max = |it: &mut dyn Iterator<Item = T>| it.fold(T::zero(), T::max);
    let eps = setup.eps;

    let inv: Vec<T> = s.iter().map(|&v| T::one() / v).collect();
    Ok(EstimateReport {
        eps: eps.as_f64(),
        sup_u: fold_max(&mut u.iter().map(|v| v.abs())).as_f64(),
        sup_grad_ab: fold_max(&mut inside().map(|i| d1[i].abs())).as_f64(),
        min_upp_ab: inside().map(|i| s[i]).fold(T::infinity(), T::min).as_f64(),
        max_w_ab: fold_max(&mut inside().map(|i| inv[i])).as_f64(),
        penalty_l2: penalty_l2(u, &setup).map_err(SolverError::from)?.as_f64(),
        eps_times_uprime_bdry: ((eps * d1[0]).as_f64(), (eps * d1[n]).as_f64()),
        j_val: eval_j(u, g, &setup.lagrangian)
            .map_err(SolverError::from)?
            .as_f64(),
        j_eps_val: eval_j_eps(u, &setup)?.as_f64(),
        int_inv_upp: g.integrate(&inv, 0, n).map_err(SolverError::from)?.as_f64(),
    })
}

/// Report fields that can be fitted against ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    SupU,
    SupGradAb,
    MinUppAb,
    MaxWAb,
    PenaltyL2,
    /// `|ε u'(-1)|`
    EpsUprimeLeft,
    /// `|ε u'(1)|`
    EpsUprimeRight,
    IntInvUpp,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::SupU,
        Field::SupGradAb,
        Field::MinUppAb,
        Field::MaxWAb,
        Field::PenaltyL2,
        Field::EpsUprimeLeft,
        Field::EpsUprimeRight,
        Field::IntInvUpp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::SupU => "sup_u",
            Field::SupGradAb => "sup_grad_ab",
            Field::MinUppAb => "min_upp_ab",
            Field::MaxWAb => "max_w_ab",
            Field::PenaltyL2 => "penalty_l2",
            Field::EpsUprimeLeft => "eps_abs_uprime_left",
            Field::EpsUprimeRight => "eps_abs_uprime_right",
            Field::IntInvUpp => "int_inv_upp",
        }
    }

    pub fn get(self, r: &EstimateReport) -> f64 {
        match self {
            Field::SupU => r.sup_u,
            Field::SupGradAb => r.sup_grad_ab,
            Field::MinUppAb => r.min_upp_ab,
            Field::MaxWAb => r.max_w_ab,
            Field::PenaltyL2 => r.penalty_l2,
            Field::EpsUprimeLeft => r.eps_times_uprime_bdry.0.abs(),
            Field::EpsUprimeRight => r.eps_times_uprime_bdry.1.abs(),
            Field::IntInvUpp => r.int_inv_upp,
        }
    }
}

/// Least-squares fit `log value ≈ slope · log ε + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub name: String,
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateOutcome {
    Fitted(RateFit),
    /// Every value is at or below the floor, so there is no rate to fit.
    IdenticallySmall {
        name: String,
        max_value: f64,
    },
}

/// Minimum number of stages for a fit.
pub const MIN_FIT_STAGES: usize = 4;

/// Fits `pairs = (ε, value)`; values all `≤ floor` yield `IdenticallySmall`.
pub fn fit_pairs(
    name: &str,
    pairs: &[(f64, f64)],
    floor: f64,
) -> Result<RateOutcome, DiagnosticsError> {
    if pairs.len() < MIN_FIT_STAGES {
        return Err(DiagnosticsError::InsufficientData {
            needed: MIN_FIT_STAGES,
            got: pairs.len(),
        });
    }
    if pairs.iter().all(|&(_, v)| v.abs() <= floor) {
        return Ok(RateOutcome::IdenticallySmall {
            name: name.to_string(),
            max_value: pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max),
        });
    }
    if let Some(&(eps, value)) = pairs.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(DiagnosticsError::NonPositive {
            name: name.to_string(),
            eps,
            value,
        });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateOutcome::Fitted(RateFit {
        name: name.to_string(),
        pairs: pairs.to_vec(),
        slope,
        intercept,
        r2,
    }))
}

/// Fits one report field across sweep stages.
pub fn fit_rate(
    reports: &[EstimateReport],
    field: Field,
    floor: f64,
) -> Result<RateOutcome, DiagnosticsError> {
    let pairs: Vec<(f64, f64)> = reports.iter().map(|r| (r.eps, field.get(r))).collect();
    fit_pairs(field.name(), &pairs, floor)
}

/// Thresholds for [`check_theorem_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPolicy {
    /// Allowed drift of a bounded quantity over the last half of the sweep.
    pub stability_factor: f64,
    /// Required decay of `ε |u'(±1)|` from first to last stage.
    pub decay_factor: f64,
    /// Below this the boundary gradient counts as already negligible.
    pub decay_floor: f64,
}

impl Default for BoundPolicy {
    fn default() -> Self {
        Self {
            stability_factor: 10.0,
            decay_factor: 5.0,
            decay_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Quantity must stay bounded away from zero.
    Lower,
    /// Quantity must stay bounded above.
    Upper,
    /// Quantity must tend to zero.
    Decay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub kind: BoundKind,
    /// Fitted constant: the inf (lower) or sup (upper) over stages, or the
    /// first/last ratio for decay checks.
    pub constant: f64,
    /// Drift over the last half (stability checks) or decay ratio.
    pub spread: f64,
    pub values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckSummary {
    pub policy: BoundPolicy,
    pub checks: Vec<BoundCheck>,
}

impl BoundCheckSummary {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// One-sided stability: a lower bound may grow but not collapse, an upper
/// bound may shrink but not blow up, both measured over the last half of
/// the sweep relative to its first stage.
fn stability_check(name: &str, kind: BoundKind, values: Vec<f64>, factor: f64) -> BoundCheck {
    let tail = &values[values.len() / 2..];
    let reference = tail[0];
    let (constant, spread) = match kind {
        BoundKind::Lower => {
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                reference / lo,
            )
        }
        _ => {
            let hi = tail.iter().copied().fold(0.0, f64::max);
            (values.iter().copied().fold(0.0, f64::max), hi / reference)
        }
    };
    let finite = values.iter().all(|v| v.is_finite());
    let pass = finite && constant > 0.0 && constant.is_finite() && spread < factor;
    BoundCheck {
        name: name.to_string(),
        kind,
        constant,
        spread,
        values,
        pass,
    }
}

fn decay_check(name: &str, values: Vec<f64>, policy: &BoundPolicy) -> BoundCheck {
    let (first, last) = (values[0], values[values.len() - 1]);
    let ratio = first / last;
    let small = values.iter().all(|&v| v < policy.decay_floor);
    BoundCheck {
        name: name.to_string(),
        kind: BoundKind::Decay,
        constant: ratio,
        spread: ratio,
        pass: small || ratio >= policy.decay_factor,
        values,
    }
}

/// Checks every sweep-level estimate on consecutive stages of one sweep.
///
/// `c0` is the uniform convexity constant of the obstacle.
pub fn check_theorem_bounds(
    reports: &[EstimateReport],
    c0: f64,
    policy: BoundPolicy,
) -> Result<BoundCheckSummary, DiagnosticsError> {
    if reports.len() < MIN_FIT_STAGES {
        return Err(DiagnosticsError::InsufficientData {
            needed: MIN_FIT_STAGES,
            got: reports.len(),
        });
    }
    let col = |f: &dyn Fn(&EstimateReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let k = policy.stability_factor;
    let checks = vec![
        stability_check(
            "min_upp_over_eps",
            BoundKind::Lower,
            col(&|r| r.min_upp_ab / r.eps),
            k,
        ),
        stability_check(
            "eps_max_w",
            BoundKind::Upper,
            col(&|r| r.eps * r.max_w_ab),
            k,
        ),
        stability_check(
            "c4_bound",
            BoundKind::Upper,
            col(&|r| r.eps * c0 * r.int_inv_upp + r.penalty_l2 / r.eps),
            k,
        ),
        stability_check("sup_u", BoundKind::Upper, col(&|r| r.sup_u), k),
        stability_check("sup_grad_ab", BoundKind::Upper, col(&|r| r.sup_grad_ab), k),
        decay_check(
            "eps_uprime_left",
            col(&|r| r.eps_times_uprime_bdry.0.abs()),
            &policy,
        ),
        decay_check(
            "eps_uprime_right",
            col(&|r| r.eps_times_uprime_bdry.1.abs()),
            &policy,
        ),
    ];
    Ok(BoundCheckSummary { policy, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..6)
            .map(|k| 0.1 * 0.5f64.powi(k))
            .map(|e| (e, f(e)))
            .collect()
    }

    fn fitted(o: RateOutcome) -> RateFit {
        match o {
            RateOutcome::Fitted(f) => f,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_power_laws() {
        let f = fitted(fit_pairs("v", &synthetic(|e| 3.0 * e), 0.0).unwrap());
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = fitted(fit_pairs("v", &synthetic(|e| 5.0 * e * e), 0.0).unwrap());
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn small_and_nonpositive_values() {
        let o = fit_pairs("pen", &synthetic(|_| 1e-30), 1e-10).unwrap();
        assert!(matches!(o, RateOutcome::IdenticallySmall { .. }));
        let mut p = synthetic(|e| e);
        p[2].1 = 0.0;
        assert!(matches!(
            fit_pairs("v", &p, 1e-10),
            Err(DiagnosticsError::NonPositive { .. })
        ));
        assert!(matches!(
            fit_pairs("v", &p[..3], 0.0),
            Err(DiagnosticsError::InsufficientData { got: 3, .. })
        ));
    }

    fn report(eps: f64, min_upp: f64, max_w: f64, bdry: f64) -> EstimateReport {
        EstimateReport {
            eps,
            sup_u: 1.0,
            sup_grad_ab: 1.0,
            min_upp_ab: min_upp,
            max_w_ab: max_w,
            penalty_l2: 0.0,
            eps_times_uprime_bdry: (-bdry, bdry),
            j_val: 0.0,
            j_eps_val: 0.0,
            int_inv_upp: 1.0,
        }
    }

    #[test]
    fn stability_is_one_sided() {
        let eps: Vec<f64> = (0..8).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        // u'' fixed: min u''/ε grows, ε max w shrinks -- both fine
        let good: Vec<_> = eps.iter().map(|&e| report(e, 2.0, 0.5, 2.0 * e)).collect();
        let s = check_theorem_bounds(&good, 2.0, BoundPolicy::default()).unwrap();
        assert!(s.all_pass(), "{s:?}");
        // u'' collapsing like ε³ breaks both bounds
        let bad: Vec<_> = eps
            .iter()
            .map(|&e| report(e, e.powi(3), e.powi(-3), 1.0))
            .collect();
        let s = check_theorem_bounds(&bad, 2.0, BoundPolicy::default()).unwrap();
        assert!(!s.get("min_upp_over_eps").unwrap().pass);
        assert!(!s.get("eps_max_w").unwrap().pass);
        assert!(!s.get("eps_uprime_right").unwrap().pass);
        assert!(check_theorem_bounds(&good[..2], 2.0, BoundPolicy::default()).is_err());
    }
}
