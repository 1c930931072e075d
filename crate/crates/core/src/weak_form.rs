//! Weak form of the limit equation `w'' = F0_z(x, u) - (F1_p(x, u'))'` on
//! `(a, b)`, tested against quartic bumps
//!
//! ```text
//! ψ(x) = ((x - c)² - r²)² / r⁴   for |x - c| ≤ r,   0 otherwise.
//! ```
//!
//! After one integration by parts the tested identity reads
//! `∫ w ψ'' = ∫ F0_z ψ + ∫ F1_p ψ'`. Each integral runs over the support of
//! `ψ` only, whose ends must be grid nodes: `ψ''` jumps there, and a
//! trapezoid rule spanning the jump would lose an order of accuracy.

use crate::grid::{Grid, GridError};
use crate::penalized::{ProblemSetup, SolveResult};
use crate::Scalar;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakFormError {
    #[error("test function {index} has support [{lo}, {hi}] within h of the window [{a}, {b}]")]
    SupportViolation {
        index: usize,
        lo: f64,
        hi: f64,
        a: f64,
        b: f64,
    },
    #[error("support ends of test function {index} are not grid nodes")]
    OffGrid { index: usize },
    #[error("test function {index} has nonpositive radius {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("centers and radii differ in length ({centers} vs {radii})")]
    ShapeMismatch { centers: usize, radii: usize },
    #[error("stage at ε = {eps} did not converge")]
    NotConverged { eps: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Quartic bump family; independent of any particular grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunctionFamily<T> {
    pub centers: Vec<T>,
    pub radii: Vec<T>,
}

impl<T: Scalar> TestFunctionFamily<T> {
    pub fn new(centers: Vec<T>, radii: Vec<T>) -> Result<Self, WeakFormError> {
        if centers.len() != radii.len() {
            return Err(WeakFormError::ShapeMismatch {
                centers: centers.len(),
                radii: radii.len(),
            });
        }
        if let Some((index, r)) = radii.iter().enumerate().find(|(_, &r)| !(r > T::zero())) {
            return Err(WeakFormError::BadRadius {
                index,
                radius: r.as_f64(),
            });
        }
        Ok(Self { centers, radii })
    }

    /// `count` bumps with centers equispaced in `[a + 0.15 L, b - 0.15 L]`
    /// and radius `0.1 L`, `L = b - a`, all snapped to nodes of `grid`.
    pub fn default_for(grid: &Grid<T>, count: usize) -> Result<Self, WeakFormError> {
        let (a, b, h) = (grid.a(), grid.b(), grid.h());
        let len = b - a;
        let snap = |x: T| a + ((x - a) / h).round() * h;
        let radius = (T::lit(0.1) * len / h).round().max(T::one()) * h;
        let (lo, hi) = (a + T::lit(0.15) * len, b - T::lit(0.15) * len);
        let centers = (0..count)
            .map(|j| {
                let t = if count > 1 {
                    T::from_usize_lossy(j) / T::from_usize_lossy(count - 1)
                } else {
                    T::lit(0.5)
                };
                snap(lo + t * (hi - lo))
            })
            .collect();
        let fam = Self::new(centers, vec![radius; count])?;
        fam.supports(grid)?;
        Ok(fam)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn psi(&self, j: usize, x: T) -> T {
        let (d, r) = (x - self.centers[j], self.radii[j]);
        if d.abs() > r {
            return T::zero();
        }
        let q = d * d - r * r;
        q * q / r.powi(4)
    }

    pub fn dpsi(&self, j: usize, x: T) -> T {
        let (d, r) = (x - self.centers[j], self.radii[j]);
        if d.abs() > r {
            return T::zero();
        }
        T::lit(4.0) * d * (d * d - r * r) / r.powi(4)
    }

    /// One-sided limit from inside the support at the support ends.
    pub fn ddpsi(&self, j: usize, x: T) -> T {
        let (d, r) = (x - self.centers[j], self.radii[j]);
        if d.abs() > r {
            return T::zero();
        }
        (T::lit(12.0) * d * d - T::lit(4.0) * r * r) / r.powi(4)
    }

    /// Node index ranges of the supports, checked against the window.
    pub fn supports(&self, grid: &Grid<T>) -> Result<Vec<(usize, usize)>, WeakFormError> {
        let h = grid.h();
        let (a, b) = (grid.a(), grid.b());
        let node_of = |x: T| -> Option<usize> {
            let k = ((x + T::one()) / h).round();
            let snapped = -T::one() + k * h;
            ((snapped - x).abs() <= T::lit(1e-6) * h && k >= T::zero())
                .then(|| k.to_usize().unwrap_or(usize::MAX))
        };
        (0..self.len())
            .map(|index| {
                let (lo, hi) = (
                    self.centers[index] - self.radii[index],
                    self.centers[index] + self.radii[index],
                );
                // tolerance keeps exact-margin supports from failing on roundoff
                let slack = T::lit(1e-6) * h;
                if lo < a + h - slack || hi > b - h + slack {
                    return Err(WeakFormError::SupportViolation {
                        index,
                        lo: lo.as_f64(),
                        hi: hi.as_f64(),
                        a: a.as_f64(),
                        b: b.as_f64(),
                    });
                }
                match (node_of(lo), node_of(hi)) {
                    (Some(i), Some(k)) if k <= grid.n() => Ok((i, k)),
                    _ => Err(WeakFormError::OffGrid { index }),
                }
            })
            .collect()
    }
}

/// `ε w_i` on the nodes `ia..=ib` of the window.
pub fn rescaled_w<T: Scalar>(
    result: &SolveResult<T>,
    setup: &ProblemSetup<T>,
) -> Result<Vec<T>, WeakFormError> {
    if !result.converged {
        return Err(WeakFormError::NotConverged {
            eps: result.eps.as_f64(),
        });
    }
    let g = &setup.grid;
    Ok(result.w[g.ia()..=g.ib()]
        .iter()
        .map(|&w| result.eps * w)
        .collect())
}

/// Weak residual of one test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakRow {
    pub index: usize,
    pub center: f64,
    pub radius: f64,
    /// `∫ w ψ''`
    pub lhs: f64,
    /// `∫ F0_z(x, u) ψ`
    pub source: f64,
    /// `∫ F1_p(x, u') ψ'`
    pub flux: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub rows: Vec<WeakRow>,
    pub max: f64,
}

/// `max_j |∫ w ψ_j'' - ∫ F0_z(x, u) ψ_j - ∫ F1_p(x, u') ψ_j'|`.
///
/// `w` holds values on the nodes `ia..=ib` (as from [`rescaled_w`]), `u` on
/// the whole grid; `u'` uses the grid's first-difference operator.
pub fn distributional_residual<T: Scalar>(
    w: &[T],
    u: &[T],
    setup: &ProblemSetup<T>,
    family: &TestFunctionFamily<T>,
) -> Result<WeakResidual, WeakFormError> {
    let g = &setup.grid;
    let (ia, ib) = (g.ia(), g.ib());
    if w.len() != ib - ia + 1 {
        return Err(GridError::LengthMismatch {
            expected: ib - ia + 1,
            got: w.len(),
        }
        .into());
    }
    let du = g.d1(u)?;
    let lag = &setup.lagrangian;
    let supports = family.supports(g)?;
    let mut rows = Vec::with_capacity(family.len());
    let mut buf = vec![T::zero(); g.n() + 1];
    for (j, &(lo, hi)) in supports.iter().enumerate() {
        let mut integral = |f: &dyn Fn(usize, T) -> T| -> Result<T, GridError> {
            for i in lo..=hi {
                buf[i] = f(i, g.x(i));
            }
            g.integrate(&buf, lo, hi)
        };
        let lhs = integral(&|i, x| w[i - ia] * family.ddpsi(j, x))?;
        let source = integral(&|i, x| (lag.f0_z)(x, u[i]) * family.psi(j, x))?;
        let flux = integral(&|i, x| (lag.f1_p)(x, du[i]) * family.dpsi(j, x))?;
        rows.push(WeakRow {
            index: j,
            center: family.centers[j].as_f64(),
            radius: family.radii[j].as_f64(),
            lhs: lhs.as_f64(),
            source: source.as_f64(),
            flux: flux.as_f64(),
            residual: (lhs - source - flux).abs().as_f64(),
        });
    }
    let max = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(WeakResidual { rows, max })
}
