#![allow(dead_code)]

pub mod fd;
pub mod oracle;

use abreu1d_core::{Grid, LagrangianSpec, Polynomial, ProblemSetup};

/// `η0 ≡ eta`, `φ = scale (x² - 1)`, window `(-1/2, 1/2)`, `ρ± = rho`.
pub fn quadratic_problem(n: usize, eta: f64, scale: f64, rho: f64, eps: f64) -> ProblemSetup<f64> {
    let g = Grid::new(n, -0.5, 0.5).unwrap();
    let lag = LagrangianSpec::rochet_chone(&Polynomial::constant(eta), g.nodes()).unwrap();
    let phi = Polynomial::new(vec![-scale, 0.0, scale]);
    ProblemSetup::new(g, lag, phi, rho, rho, eps).unwrap()
}

/// Exact-solution problem: `u = x² - 1` solves every stage.
pub fn calibration(n: usize, eps: f64) -> ProblemSetup<f64> {
    quadratic_problem(n, 1.0, 1.0, 0.5, eps)
}

/// Penalty-only problem: `F ≡ 0`, `ρ± = 1/φ''(±1)`.
pub fn penalty_only(n: usize, eps: f64) -> ProblemSetup<f64> {
    quadratic_problem(n, 0.0, 1.0, 0.5, eps)
}

/// `η0 ≡ 1`, `φ = 3(x² - 1)`, `ρ± = 1/6`.
pub fn steep_obstacle(n: usize, eps: f64) -> ProblemSetup<f64> {
    quadratic_problem(n, 1.0, 3.0, 1.0 / 6.0, eps)
}

/// Convex, boundary-preserving perturbation of `φ`.
pub fn perturbed_start(setup: &ProblemSetup<f64>, amp: f64) -> Vec<f64> {
    let g = &setup.grid;
    (0..=g.n())
        .map(|i| {
            let x = g.x(i);
            setup.phi[i] + amp * (1.0 - x * x) * (1.0 + 0.3 * x)
        })
        .collect()
}

pub fn second_diff(v: &[f64], h: f64, i: usize) -> f64 {
    (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h)
}
