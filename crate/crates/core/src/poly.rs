//! Dense polynomials in ascending coefficient order.

use crate::Scalar;
use serde::{Deserialize, Serialize};

/// `c[0] + c[1] x + c[2] x^2 + ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: T) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Horner evaluation; the empty polynomial is zero.
    pub fn eval(&self, x: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_usize_lossy(k))
            .collect();
        Self { coeffs }
    }

    /// Upper bound of `|p(x)|` on `[-1, 1]`: the sum of absolute coefficients.
    pub fn abs_bound_unit_interval(&self) -> T {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}
