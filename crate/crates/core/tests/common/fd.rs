//! Finite-difference check of the analytic Jacobian.

use abreu1d_core::{jacobian, residual, ProblemSetup};

/// Normwise (Frobenius) relative error against a fourth-order central difference.
pub fn fd_jacobian_error(u: &[f64], setup: &ProblemSetup<f64>) -> f64 {
    let n = u.len();
    let jac = jacobian(u, setup).unwrap();
    let step = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    let mut up = u.to_vec();
    let mut at = |j: usize, k: f64| {
        up[j] = u[j] + k * step;
        let r = residual(&up, setup).unwrap();
        up[j] = u[j];
        r
    };
    for j in 0..n {
        // fourth-order central difference
        let (r2, r1, m1, m2) = (at(j, 2.0), at(j, 1.0), at(j, -1.0), at(j, -2.0));
        for i in 0..n {
            let fd = (8.0 * (r1[i] - m1[i]) - (r2[i] - m2[i])) / (12.0 * step);
            let an = jac.get(i, j);
            num += (fd - an).powi(2);
            den += an * an;
        }
    }
    (num / den).sqrt()
}

/// `φ` plus sine modes damped by `1/k²`, keeping `u''` well above zero.
pub fn smooth_perturbation(setup: &ProblemSetup<f64>, coeffs: &[f64], noise: &[f64]) -> Vec<f64> {
    let g = &setup.grid;
    let n = g.n();
    (0..=n)
        .map(|i| {
            let t = std::f64::consts::FRAC_PI_2 * (g.x(i) + 1.0);
            let smooth: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let m = (k + 1) as f64;
                    c / (m * m) * (m * t).sin()
                })
                .sum();
            let edge = if i == 0 || i == n {
                0.0
            } else {
                noise[i % noise.len()]
            };
            setup.phi[i] + smooth + edge
        })
        .collect()
}
