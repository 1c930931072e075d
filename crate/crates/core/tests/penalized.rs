mod common;

use abreu1d_core::{
    continuation_sweep, eval_j_eps, max_abs, max_abs_diff, newton_solve, residual, EpsSchedule,
    Grid, LagrangianSpec, NewtonOptions, Polynomial, ProblemSetup, SolveResult,
};
use common::fd::*;
use common::*;
use proptest::prelude::*;
use std::sync::Arc;

/// `F0 = η z²/2 + z`, `F1 = η (p⁴/12 + p²/2 - x p)` with `η = 1 + x²/2`;
/// the third derivatives are left to the finite-difference fallback.
fn quartic_lagrangian() -> LagrangianSpec<f64> {
    let eta = |x: f64| 1.0 + 0.5 * x * x;
    let deta = |x: f64| x;
    LagrangianSpec {
        name: "quartic".into(),
        f0: Arc::new(move |x, z| eta(x) * z * z / 2.0 + z),
        f0_z: Arc::new(move |x, z| eta(x) * z + 1.0),
        f0_zz: Arc::new(move |x, _| eta(x)),
        f1: Arc::new(move |x, p| eta(x) * (p.powi(4) / 12.0 + p * p / 2.0 - x * p)),
        f1_p: Arc::new(move |x, p| eta(x) * (p.powi(3) / 3.0 + p - x)),
        f1_pp: Arc::new(move |x, p| eta(x) * (p * p + 1.0)),
        f1_px: Arc::new(move |x, p| deta(x) * (p.powi(3) / 3.0 + p - x) - eta(x)),
        f1_pxp: None,
        f1_ppp: None,
        dstar: 10.0,
        eta: None,
        eta1: None,
        eta2: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn analytic_jacobian_matches_finite_differences(
        coeffs in prop::collection::vec(-0.05f64..0.05, 4),
        noise in prop::collection::vec(-1e-5f64..1e-5, 7),
        eps in 0.005f64..0.5,
        rho in 0.2f64..2.0,
    ) {
        let s = ProblemSetup::new(
            Grid::new(64, -0.5, 0.5).unwrap(),
            LagrangianSpec::rochet_chone(&Polynomial::new(vec![1.0, 0.3, 0.2]), Grid::new(64, -0.5, 0.5).unwrap().nodes()).unwrap(),
            Polynomial::new(vec![-1.0, 0.0, 1.0]),
            rho,
            rho,
            eps,
        ).unwrap();
        let u = smooth_perturbation(&s, &coeffs, &noise);
        let err = fd_jacobian_error(&u, &s);
        prop_assert!(err <= 1e-6, "relative error {err:e}");
    }

    #[test]
    fn jacobian_with_fallback_third_derivatives(
        coeffs in prop::collection::vec(-0.05f64..0.05, 4),
        eps in 0.01f64..0.5,
    ) {
        let g = Grid::new(64, -0.5, 0.5).unwrap();
        let s = ProblemSetup::new(g, quartic_lagrangian(), Polynomial::new(vec![-1.0, 0.0, 1.0]), 0.5, 0.5, eps).unwrap();
        let u = smooth_perturbation(&s, &coeffs, &[0.0]);
        let err = fd_jacobian_error(&u, &s);
        prop_assert!(err <= 1e-6, "relative error {err:e}");
    }
}

/// `‖R_{k+1}‖ / ‖R_k‖²` over the final two steps.
fn tail_ratios(r: &SolveResult<f64>) -> (f64, f64) {
    let v = &r.residual_norms;
    let k = v.len();
    assert!(k >= 3, "{v:?}");
    (v[k - 2] / v[k - 3].powi(2), v[k - 1] / v[k - 2].powi(2))
}

#[test]
fn calibration_recovered_with_quadratic_tail() {
    for eps in EpsSchedule::<f64>::default_sweep().values() {
        let s = calibration(64, eps);
        let r = newton_solve(&s, &perturbed_start(&s, 0.1), &NewtonOptions::default()).unwrap();
        assert!(r.converged, "eps {eps}: {:?}", r.failure);
        assert!(max_abs_diff(&r.u, &s.phi) <= 1e-8);
        let (q1, q2) = tail_ratios(&r);
        assert!(q1 < 100.0 && q2 < 100.0, "eps {eps}: {q1} {q2}");
        assert!(r.final_residual() <= r.tol);
    }
}

#[test]
fn fine_grid_converges_at_roundoff_floor() {
    for eps in [0.1, 0.025, 1e-4] {
        let s = calibration(512, eps);
        let r = newton_solve(&s, &perturbed_start(&s, 0.1), &NewtonOptions::default()).unwrap();
        assert!(
            r.converged,
            "eps {eps}: {:?} {:?}",
            r.failure, r.residual_norms
        );
        assert!(max_abs_diff(&r.u, &s.phi) <= 1e-8);
    }
}

#[test]
fn solution_invariants_along_sweep() {
    let s = steep_obstacle(128, 0.1);
    let sw =
        continuation_sweep(&s, &EpsSchedule::default_sweep(), &NewtonOptions::default()).unwrap();
    assert!(sw.all_converged());
    assert_eq!(sw.stages.len(), 11);
    let n = s.grid.n();
    for st in &sw.stages {
        assert_eq!(st.u[0], 0.0);
        assert_eq!(st.u[n], 0.0);
        assert!(st.min_upp > 0.0 && st.w.iter().all(|&w| w > 0.0));
        let d2 = s.grid.d2(&st.u).unwrap();
        for (w, s2) in st.w.iter().zip(&d2) {
            assert!((w * s2 - 1.0).abs() <= 1e-12);
        }
        assert!((st.w[0] - s.rho_minus).abs() + (st.w[n] - s.rho_plus).abs() <= st.tol);
        let se = s.with_eps(st.eps).unwrap();
        assert!(max_abs(&residual(&st.u, &se).unwrap()) <= st.tol);
    }
}

#[test]
fn solver_rows_are_stationarity_of_j_eps() {
    // away from ±1 and the window ends, where one-sided stencils and the
    // jump in f_ε spoil the match
    let base = steep_obstacle(128, 0.1);
    for sched in [vec![0.1], vec![0.1, 0.05, 0.025, 0.01]] {
        let eps = *sched.last().unwrap();
        let s = base.with_eps(eps).unwrap();
        let sched = EpsSchedule::Explicit(sched);
        let sw = continuation_sweep(&base, &sched, &NewtonOptions::default()).unwrap();
        let u = sw.last().unwrap().u.clone();
        let (n, ia, ib) = (s.grid.n(), s.grid.ia(), s.grid.ib());
        let far = |i: usize| [0, n, ia, ib].iter().all(|&k| i.abs_diff(k) > 3);
        // small step: the log term has third derivatives of order ε / h⁵
        let step = 1e-7;
        let mut v = u.clone();
        let mut worst: f64 = 0.0;
        for i in (1..n).filter(|&i| far(i)) {
            v[i] = u[i] + step;
            let jp = eval_j_eps(&v, &s).unwrap();
            v[i] = u[i] - step;
            let jm = eval_j_eps(&v, &s).unwrap();
            v[i] = u[i];
            worst = worst.max(((jp - jm) / (2.0 * step)).abs());
        }
        assert!(worst <= 1e-5 * (1.0 + 1.0 / eps), "eps {eps}: {worst:e}");
    }
}

#[test]
fn penalty_only_stays_at_obstacle() {
    let s = penalty_only(128, 0.1);
    let sw =
        continuation_sweep(&s, &EpsSchedule::default_sweep(), &NewtonOptions::default()).unwrap();
    assert!(sw.all_converged());
    for st in &sw.stages {
        assert!(max_abs_diff(&st.u, &s.phi) < 1e-10);
    }
}

#[test]
fn single_precision_solve() {
    let g = Grid::<f32>::new(32, -0.5, 0.5).unwrap();
    let lag = LagrangianSpec::rochet_chone(&Polynomial::constant(1.0f32), g.nodes()).unwrap();
    let s = ProblemSetup::new(
        g,
        lag,
        Polynomial::new(vec![-1.0f32, 0.0, 1.0]),
        0.5,
        0.5,
        0.05,
    )
    .unwrap();
    let u0: Vec<f32> = s
        .grid
        .nodes()
        .iter()
        .zip(&s.phi)
        .map(|(&x, &p)| p + 0.05 * (1.0 - x * x))
        .collect();
    let opts = NewtonOptions {
        tol: Some(1e-3),
        ..NewtonOptions::default()
    };
    let r = newton_solve(&s, &u0, &opts).unwrap();
    assert!(r.converged, "{:?}", r.residual_norms);
    assert!(max_abs_diff(&r.u, &s.phi) < 1e-4);
}
