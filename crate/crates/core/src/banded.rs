//! Banded matrices and LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: each row keeps the band plus
//! `kl` extra super-diagonals to absorb fill-in from row interchanges.

use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandedError {
    #[error("matrix is singular to working precision at column {col}")]
    Singular { col: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Square `n x n` matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.kl + self.ku || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * self.width + (j + self.kl - i))
    }

    /// Entry `(i, j)`; zero outside the stored band.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.data[k])
    }

    /// Sets entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j + self.kl >= i && j <= i + self.ku && i < self.n && j < self.n,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.slot(i, j).unwrap();
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// Columns that can hold nonzeros in row `i` before factorization.
    pub fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Gaussian elimination with partial pivoting within the band.
    pub fn factor(mut self) -> Result<BandedLu<T>, BandedError> {
        let (n, kl) = (self.n, self.kl);
        let mut pivots = vec![0usize; n];
        let mut mult = vec![T::zero(); n * kl.max(1)];

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + self.ku).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(BandedError::Singular { col: k });
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j).unwrap();
                    let b = self.slot(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }
            let piv = self.get(k, k);
            for r in k + 1..=last_row {
                let m = self.get(r, k) / piv;
                mult[k * kl + (r - k - 1)] = m;
                let s = self.slot(r, k).unwrap();
                self.data[s] = T::zero();
                if m == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let ukj = self.get(k, j);
                    if ukj != T::zero() {
                        let s = self.slot(r, j).unwrap();
                        self.data[s] = self.data[s] - m * ukj;
                    }
                }
            }
        }
        Ok(BandedLu {
            upper: self,
            pivots,
            mult,
        })
    }
}

/// Factored form of a [`BandedMatrix`].
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    upper: BandedMatrix<T>,
    pivots: Vec<usize>,
    mult: Vec<T>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>, BandedError> {
        let u = &self.upper;
        let (n, kl) = (u.n, u.kl);
        if rhs.len() != n {
            return Err(BandedError::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] = x[r] - self.mult[k * kl + (r - k - 1)] * xk;
            }
        }
        let span = kl + u.ku;
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..=(k + span).min(n - 1) {
                acc = acc - u.get(k, j) * x[j];
            }
            x[k] = acc / u.get(k, k);
        }
        Ok(x)
    }
}

/// Factors and solves in one call.
pub fn solve_banded<T: Scalar>(a: BandedMatrix<T>, rhs: &[T]) -> Result<Vec<T>, BandedError> {
    a.factor()?.solve(rhs)
}
