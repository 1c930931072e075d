//! Uniform grid on `[-1, 1]` with a node-aligned window `[a, b]`, plus the
//! discrete calculus every other module shares.
//!
//! Stencils are second order everywhere. Interior nodes use central
//! differences; the two endpoints use one-sided three-point (first
//! derivative) and four-point (second derivative) formulas so that
//! conditions on `1/u''(±1)` are algebraic in the nodal values.

use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("bad domain: need -1 < a < b < 1, got a = {a}, b = {b}")]
    BadDomain { a: f64, b: f64 },
    #[error("bad cell count {n}: need n >= 16 and even")]
    BadCellCount { n: usize },
    #[error("window too small: snapped window [{ia}, {ib}] has fewer than 3 interior nodes")]
    WindowTooSmall { ia: usize, ib: usize },
    #[error("length mismatch: expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bad integration range [{lo}, {hi}] on a grid with {n} cells")]
    BadRange { lo: usize, hi: usize, n: usize },
}

/// Uniform partition of `[-1, 1]` into `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    n: usize,
    h: T,
    nodes: Vec<T>,
    ia: usize,
    ib: usize,
}

impl<T: Scalar> Grid<T> {
    /// Builds the grid and snaps `a`, `b` to their nearest nodes.
    pub fn new(n: usize, a: T, b: T) -> Result<Self, GridError> {
        let one = T::one();
        if !(a > -one && a < b && b < one) {
            return Err(GridError::BadDomain {
                a: a.as_f64(),
                b: b.as_f64(),
            });
        }
        if n < 16 || n % 2 != 0 {
            return Err(GridError::BadCellCount { n });
        }
        let h = T::lit(2.0) / T::from_usize_lossy(n);
        let mut nodes: Vec<T> = (0..=n).map(|i| -one + T::from_usize_lossy(i) * h).collect();
        nodes[0] = -one;
        nodes[n] = one;

        let snap = |x: T| -> usize {
            let k = ((x + one) / h).round().to_usize().unwrap_or(0);
            k.min(n)
        };
        let (ia, ib) = (snap(a), snap(b));
        if ia == 0 || ib >= n {
            return Err(GridError::BadDomain {
                a: a.as_f64(),
                b: b.as_f64(),
            });
        }
        if ib < ia + 4 {
            return Err(GridError::WindowTooSmall { ia, ib });
        }
        Ok(Self {
            n,
            h,
            nodes,
            ia,
            ib,
        })
    }

    /// Number of cells; there are `n + 1` nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> T {
        self.nodes[i]
    }

    /// Index of the snapped left window endpoint.
    pub fn ia(&self) -> usize {
        self.ia
    }

    /// Index of the snapped right window endpoint.
    pub fn ib(&self) -> usize {
        self.ib
    }

    pub fn a(&self) -> T {
        self.nodes[self.ia]
    }

    pub fn b(&self) -> T {
        self.nodes[self.ib]
    }

    /// Strict membership `a < x_i < b`: the Lagrangian branch of the scheme.
    /// The endpoints `x_ia`, `x_ib` belong to the penalty branch.
    pub fn in_window(&self, i: usize) -> bool {
        i > self.ia && i < self.ib
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    fn check_len(&self, values: &[T]) -> Result<(), GridError> {
        if values.len() != self.n + 1 {
            return Err(GridError::LengthMismatch {
                expected: self.n + 1,
                got: values.len(),
            });
        }
        Ok(())
    }

    /// First derivative at every node.
    pub fn d1(&self, values: &[T]) -> Result<Vec<T>, GridError> {
        self.check_len(values)?;
        Ok((0..=self.n).map(|i| self.d1_at(values, i)).collect())
    }

    /// First derivative at node `i`; `values` must have `n + 1` entries.
    pub fn d1_at(&self, v: &[T], i: usize) -> T {
        let two = T::lit(2.0);
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        let n = self.n;
        if i == 0 {
            (-three * v[0] + four * v[1] - v[2]) / (two * self.h)
        } else if i == n {
            (three * v[n] - four * v[n - 1] + v[n - 2]) / (two * self.h)
        } else {
            (v[i + 1] - v[i - 1]) / (two * self.h)
        }
    }

    /// Coefficients `(first column, weights)` of the `d1` stencil at node `i`.
    pub fn d1_stencil(&self, i: usize) -> (usize, Vec<T>) {
        let inv = T::one() / (T::lit(2.0) * self.h);
        let n = self.n;
        if i == 0 {
            (0, vec![T::lit(-3.0) * inv, T::lit(4.0) * inv, -inv])
        } else if i == n {
            (n - 2, vec![inv, T::lit(-4.0) * inv, T::lit(3.0) * inv])
        } else {
            (i - 1, vec![-inv, T::zero(), inv])
        }
    }

    /// Second derivative at every node.
    pub fn d2(&self, values: &[T]) -> Result<Vec<T>, GridError> {
        self.check_len(values)?;
        Ok((0..=self.n).map(|i| self.d2_at(values, i)).collect())
    }

    /// Second derivative at node `i`; `values` must have `n + 1` entries.
    pub fn d2_at(&self, v: &[T], i: usize) -> T {
        let (first, w) = self.d2_stencil(i);
        w.iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &c)| acc + c * v[first + k])
    }

    /// Coefficients `(first column, weights)` of the `d2` stencil at node `i`.
    pub fn d2_stencil(&self, i: usize) -> (usize, Vec<T>) {
        let inv = T::one() / (self.h * self.h);
        let n = self.n;
        let c = |x: f64| T::lit(x) * inv;
        if i == 0 {
            (0, vec![c(2.0), c(-5.0), c(4.0), c(-1.0)])
        } else if i == n {
            (n - 3, vec![c(-1.0), c(4.0), c(-5.0), c(2.0)])
        } else {
            (i - 1, vec![c(1.0), c(-2.0), c(1.0)])
        }
    }

    /// Composite trapezoid rule on `[x_lo, x_hi]`.
    pub fn integrate(&self, values: &[T], lo: usize, hi: usize) -> Result<T, GridError> {
        self.check_len(values)?;
        if lo >= hi || hi > self.n {
            return Err(GridError::BadRange { lo, hi, n: self.n });
        }
        let half = T::lit(0.5);
        let inner: T = values[lo + 1..hi].iter().copied().sum();
        Ok(self.h * (half * (values[lo] + values[hi]) + inner))
    }

    /// Cell midpoints `x_{i+1/2}`, `i = 0..n`.
    pub fn midpoints(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.nodes
            .windows(2)
            .map(|p| half * (p[0] + p[1]))
            .collect()
    }

    /// Cell slopes `(v_{i+1} - v_i) / h`, one per cell.
    pub fn cell_slopes(&self, values: &[T]) -> Result<Vec<T>, GridError> {
        self.check_len(values)?;
        Ok(values.windows(2).map(|p| (p[1] - p[0]) / self.h).collect())
    }
}
