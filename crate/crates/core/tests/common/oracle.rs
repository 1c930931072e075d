//! Independent oracles for the direct minimizer.

use super::second_diff;
use abreu1d_core::ConeProblem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Independent discretization of `J` for `F = (p²/2 - x p + z)`:
/// trapezoid for `z`, cell midpoints and slopes for the rest.
pub fn j_unit_weight(v: &[f64], h: f64, ia: usize, ib: usize) -> f64 {
    let x = |i: usize| -1.0 + i as f64 * h;
    let mut j = 0.0;
    for i in ia..=ib {
        let wt = if i == ia || i == ib { 0.5 } else { 1.0 };
        j += h * wt * v[i];
    }
    for c in ia..ib {
        let p = (v[c + 1] - v[c]) / h;
        let m = 0.5 * (x(c) + x(c + 1));
        j += h * (0.5 * p * p - m * p);
    }
    j
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-12 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for r in k + 1..n {
            let m = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= m * a[k][c];
            }
            b[r] -= m * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Exact minimizer of the quadratic `J` over the convex cone by trying
/// every active set of the second-difference constraints.
pub fn brute_force(phi: &[f64], h: f64, ia: usize, ib: usize) -> Vec<f64> {
    let free: Vec<usize> = (ia + 1..ib).collect();
    let cons: Vec<usize> = (ia..=ib).collect();
    let m = free.len();
    let embed = |y: &[f64]| {
        let mut v = phi.to_vec();
        for (k, &i) in free.iter().enumerate() {
            v[i] = y[k];
        }
        v
    };
    // J(y) = ½ yᵀQy + cᵀy + const, recovered exactly by polarization
    let j = |y: &[f64]| j_unit_weight(&embed(y), h, ia, ib);
    let zero = vec![0.0; m];
    let j0 = j(&zero);
    let unit = |k: usize, s: f64| {
        let mut y = zero.clone();
        y[k] = s;
        y
    };
    let mut q = vec![vec![0.0; m]; m];
    let mut c = vec![0.0; m];
    for k in 0..m {
        c[k] = (j(&unit(k, 1.0)) - j(&unit(k, -1.0))) / 2.0;
        for l in 0..m {
            let mut y = unit(k, 1.0);
            y[l] += 1.0;
            q[k][l] = j(&y) - j(&unit(k, 1.0)) - j(&unit(l, 1.0)) + j0;
        }
    }
    // constraint rows: h² s_i = A_i y + b_i ≥ 0
    let rows: Vec<(Vec<f64>, f64)> = cons
        .iter()
        .map(|&i| {
            let mut a = vec![0.0; m];
            let mut b = 0.0;
            for (d, coef) in [(-1i64, 1.0), (0, -2.0), (1, 1.0)] {
                let node = (i as i64 + d) as usize;
                match free.iter().position(|&f| f == node) {
                    Some(k) => a[k] += coef,
                    None => b += coef * phi[node],
                }
            }
            (a, b)
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let act: Vec<usize> = (0..rows.len()).filter(|k| mask >> k & 1 == 1).collect();
        let dim = m + act.len();
        let mut kkt = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for k in 0..m {
            kkt[k][..m].copy_from_slice(&q[k]);
            rhs[k] = -c[k];
        }
        for (r, &ci) in act.iter().enumerate() {
            for k in 0..m {
                kkt[k][m + r] = -rows[ci].0[k];
                kkt[m + r][k] = rows[ci].0[k];
            }
            rhs[m + r] = -rows[ci].1;
        }
        let Some(sol) = gauss_solve(kkt, rhs) else {
            continue;
        };
        let (y, lambda) = sol.split_at(m);
        let feasible = rows
            .iter()
            .all(|(a, b)| a.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() + b >= -1e-13);
        if feasible && lambda.iter().all(|&l| l >= -1e-13) {
            let val = j(y);
            if best.as_ref().map_or(true, |(bv, _)| val < *bv) {
                best = Some((val, y.to_vec()));
            }
        }
    }
    embed(&best.expect("some active set is optimal").1)
}

/// Random feasible point `φ + β (x - a)(b - x)(1 + ξ₁ x + ξ₂ x²)` inside the window.
pub fn random_feasible(p: &ConeProblem<f64>, rng: &mut ChaCha8Rng, c0: f64) -> Option<Vec<f64>> {
    let g = &p.grid;
    let (a, b) = (g.a(), g.b());
    let beta = rng.gen_range(0.0..0.25 * c0);
    let (x1, x2) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let mut v = p.phi.clone();
    for i in g.ia() + 1..g.ib() {
        let x = g.x(i);
        v[i] += beta * (x - a) * (b - x) * (1.0 + x1 * x + x2 * x * x);
    }
    (1..g.n())
        .all(|i| second_diff(&v, g.h(), i) >= 0.0)
        .then_some(v)
}
