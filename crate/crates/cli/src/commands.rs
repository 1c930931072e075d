//! The four verbs. Each returns the run status or a [`CliError`] that maps
//! onto the exit-code contract.

use crate::config::{ConfigError, Prepared, RunConfig};
use crate::output::{fmt_f64, OutputDir, RunManifest, StageSummary, Table};
use abreu1d_core::{
    check_theorem_bounds, compute_report, continuation_sweep, distributional_residual, fit_rate,
    minimize_direct, newton_solve, rescaled_w, source_values, BoundPolicy, ConeProblem,
    EpsSchedule, EstimateReport, Field, MinimizeResult, ProblemSetup, RateOutcome, SolveResult,
    SweepResult, TestFunctionFamily,
};
use log::{info, warn};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Values at or below this count as identically small in rate fits.
pub const RATE_FLOOR: f64 = 1e-10;
/// Number of bumps in the weak-form test family.
pub const TEST_FUNCTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Solve,
    Sweep,
    Compare,
    Verify,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Solve => "solve",
            Verb::Sweep => "sweep",
            Verb::Compare => "compare",
            Verb::Verify => "verify",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

/// Loads, validates and prepares the output directory.
fn open(config: &Path, out: Option<&Path>) -> Result<(Prepared, OutputDir), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(dir) = out {
        cfg.outputs = dir.to_path_buf();
    }
    let prepared = cfg.prepare()?;
    let dir = OutputDir::prepare(&prepared.config.outputs).map_err(|e| {
        ConfigError::Invalid(format!(
            "output directory {} is not writable: {e}",
            prepared.config.outputs.display()
        ))
    })?;
    Ok((prepared, dir))
}

pub fn run(verb: Verb, config: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let start = Instant::now();
    let (prepared, mut dir) = open(config, out)?;
    info!("{} -> {}", verb.name(), dir.root().display());
    let mut stages = Vec::new();
    let result = match verb {
        Verb::Solve => cmd_solve(&prepared, &mut dir, &mut stages),
        Verb::Sweep => cmd_sweep(&prepared, &mut dir, &mut stages),
        Verb::Compare => cmd_compare(&prepared, &mut dir, &mut stages),
        Verb::Verify => cmd_verify(&prepared, &mut dir, &mut stages),
    };
    let status = match &result {
        Ok(s) => s.clone(),
        Err(e) => format!("error (exit {}): {e}", e.exit_code()),
    };
    dir.finish(RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: verb.name().to_string(),
        status,
        config: serde_json::to_value(&prepared.config).expect("config serializes"),
        stages,
        files: Vec::new(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })?;
    result
}

fn stage_summary(index: usize, r: &SolveResult<f64>) -> StageSummary {
    StageSummary {
        index,
        eps: r.eps,
        converged: r.converged,
        newton_iters: r.newton_iters,
        final_residual: r.final_residual(),
        tol: r.tol,
        wall_seconds: r.elapsed.as_secs_f64(),
    }
}

/// `x, u, u_prime, u_pp, w, f_eps` at every node.
pub fn solution_table(setup: &ProblemSetup<f64>, r: &SolveResult<f64>) -> Vec<u8> {
    let g = &setup.grid;
    let setup = setup.with_eps(r.eps).expect("stage ε was validated");
    let d1 = g.d1(&r.u).expect("length checked by the solver");
    let d2 = g.d2(&r.u).expect("length checked by the solver");
    let f = source_values(&r.u, &setup).unwrap_or_else(|_| vec![f64::NAN; r.u.len()]);
    let mut t = Table::new(&["x", "u", "u_prime", "u_pp", "w", "f_eps"]);
    for i in 0..r.u.len() {
        t.numeric_row(&[g.x(i), r.u[i], d1[i], d2[i], r.w[i], f[i]]);
    }
    t.into_bytes()
}

fn cmd_solve(
    p: &Prepared,
    dir: &mut OutputDir,
    stages: &mut Vec<StageSummary>,
) -> Result<String, CliError> {
    if p.eps.len() != 1 {
        return Err(ConfigError::Invalid(format!(
            "solve needs a single-ε schedule, got {} stages",
            p.eps.len()
        ))
        .into());
    }
    let r = newton_solve(&p.setup, &p.setup.phi, &p.newton)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    stages.push(stage_summary(0, &r));
    dir.write("solution.csv", &solution_table(&p.setup, &r))?;
    if !r.converged {
        return Err(CliError::Solver(format!(
            "Newton did not converge at ε = {}: {:?}, final residual {:e}",
            r.eps,
            r.failure,
            r.final_residual()
        )));
    }
    Ok(format!("converged in {} Newton iterations", r.newton_iters))
}

fn run_sweep(p: &Prepared) -> Result<SweepResult<f64>, CliError> {
    continuation_sweep(&p.setup, &EpsSchedule::Explicit(p.eps.clone()), &p.newton)
        .map_err(|e| CliError::Solver(e.to_string()))
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum BoundsDoc {
    Checked(abreu1d_core::BoundCheckSummary),
    Unavailable { error: String },
}

fn rate_rows(t: &mut Table, window: &str, reports: &[EstimateReport]) {
    for field in Field::ALL {
        let blank = String::new;
        let row = match fit_rate(reports, field, RATE_FLOOR) {
            Ok(RateOutcome::Fitted(f)) => [
                "fitted".to_string(),
                fmt_f64(f.slope),
                fmt_f64(f.intercept),
                fmt_f64(f.r2),
                blank(),
            ],
            Ok(RateOutcome::IdenticallySmall { max_value, .. }) => [
                "identically_small".to_string(),
                blank(),
                blank(),
                blank(),
                fmt_f64(max_value),
            ],
            Err(e) => [
                "error".to_string(),
                blank(),
                blank(),
                blank(),
                e.to_string(),
            ],
        };
        let mut fields = vec![
            field.name().to_string(),
            window.to_string(),
            reports.len().to_string(),
        ];
        fields.extend(row);
        t.row(fields);
    }
}

/// Writes every sweep artifact for the completed stages.
fn write_sweep(
    p: &Prepared,
    sweep: &SweepResult<f64>,
    dir: &mut OutputDir,
    stages: &mut Vec<StageSummary>,
) -> Result<Vec<EstimateReport>, CliError> {
    let mut table = Table::new(&[
        "stage",
        "eps",
        "sup_u",
        "sup_grad_ab",
        "min_upp_ab",
        "max_w_ab",
        "penalty_l2",
        "eps_uprime_left",
        "eps_uprime_right",
        "j_val",
        "j_eps_val",
        "int_inv_upp",
        "newton_iters",
        "final_residual",
    ]);
    let mut reports = Vec::new();
    for (k, st) in sweep.stages.iter().enumerate() {
        stages.push(stage_summary(k, st));
        dir.write(
            &format!("solution_{k:02}.csv"),
            &solution_table(&p.setup, st),
        )?;
        let r = compute_report(st, &p.setup).map_err(|e| CliError::Solver(e.to_string()))?;
        let mut row = vec![k.to_string()];
        row.extend(
            [
                r.eps,
                r.sup_u,
                r.sup_grad_ab,
                r.min_upp_ab,
                r.max_w_ab,
                r.penalty_l2,
                r.eps_times_uprime_bdry.0,
                r.eps_times_uprime_bdry.1,
                r.j_val,
                r.j_eps_val,
                r.int_inv_upp,
            ]
            .map(fmt_f64),
        );
        row.push(st.newton_iters.to_string());
        row.push(fmt_f64(st.final_residual()));
        table.row(row);
        reports.push(r);
    }
    if let Some(f) = &sweep.failure {
        stages.push(stage_summary(f.index, &f.result));
    }
    dir.write("sweep.csv", &table.into_bytes())?;

    let mut rates = Table::new(&[
        "field",
        "window",
        "stages",
        "status",
        "slope",
        "intercept",
        "r2",
        "detail",
    ]);
    rate_rows(&mut rates, "all", &reports);
    rate_rows(&mut rates, "last_half", &reports[reports.len() / 2..]);
    dir.write("rates.csv", &rates.into_bytes())?;

    let bounds = match check_theorem_bounds(&reports, p.setup.c0, BoundPolicy::default()) {
        Ok(b) => BoundsDoc::Checked(b),
        Err(e) => BoundsDoc::Unavailable {
            error: e.to_string(),
        },
    };
    dir.write_json("bounds.json", &bounds)?;
    Ok(reports)
}

fn sweep_failure(sweep: &SweepResult<f64>) -> Option<CliError> {
    sweep.failure.as_ref().map(|f| {
        let last = match f.index {
            0 => "none".to_string(),
            k => format!("{} (ε = {})", k - 1, sweep.stages[k - 1].eps),
        };
        CliError::Solver(format!(
            "stage {} (ε = {}) did not converge: {:?}, final residual {:e}; last completed stage: {last}",
            f.index,
            f.result.eps,
            f.result.failure,
            f.result.final_residual()
        ))
    })
}

fn cmd_sweep(
    p: &Prepared,
    dir: &mut OutputDir,
    stages: &mut Vec<StageSummary>,
) -> Result<String, CliError> {
    let sweep = run_sweep(p)?;
    write_sweep(p, &sweep, dir, stages)?;
    if let Some(e) = sweep_failure(&sweep) {
        return Err(e);
    }
    Ok(format!("{} stages converged", sweep.stages.len()))
}

#[derive(Debug, Serialize)]
pub struct CompareSummary {
    pub eps_smallest: f64,
    pub inner_window: (f64, f64),
    pub max_abs_diff_inner: f64,
    pub j_abreu: f64,
    pub j_direct: f64,
    pub j_abs_diff: f64,
    pub kkt_residual: f64,
    pub kkt_tol: f64,
    pub duality_gap: f64,
}

fn cmd_compare(
    p: &Prepared,
    dir: &mut OutputDir,
    stages: &mut Vec<StageSummary>,
) -> Result<String, CliError> {
    let problem = ConeProblem::from_setup(&p.setup);
    let (sweep, oracle) = std::thread::scope(|s| {
        let oracle = s.spawn(|| minimize_direct(&problem, &p.minimize));
        let sweep = run_sweep(p);
        (sweep, oracle.join().expect("oracle thread panicked"))
    });
    let sweep = sweep?;
    write_sweep(p, &sweep, dir, stages)?;
    if let Some(e) = sweep_failure(&sweep) {
        return Err(e);
    }
    let oracle: MinimizeResult<f64> = oracle.map_err(|e| CliError::Oracle(e.to_string()))?;
    let last = sweep.last().expect("a validated schedule has a stage");

    let g = &p.setup.grid;
    let len = g.b() - g.a();
    let (lo, hi) = (g.a() + 0.1 * len, g.b() - 0.1 * len);
    let mut table = Table::new(&["x", "u_abreu_smallest_eps", "u_direct", "abs_diff"]);
    let mut worst: f64 = 0.0;
    for i in 0..=g.n() {
        let x = g.x(i);
        let d = (last.u[i] - oracle.v[i]).abs();
        if x >= lo && x <= hi {
            worst = worst.max(d);
        }
        table.numeric_row(&[x, last.u[i], oracle.v[i], d]);
    }
    dir.write("compare.csv", &table.into_bytes())?;
    let j_abreu = problem
        .eval_j(&last.u)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let summary = CompareSummary {
        eps_smallest: last.eps,
        inner_window: (lo, hi),
        max_abs_diff_inner: worst,
        j_abreu,
        j_direct: oracle.j_value,
        j_abs_diff: (j_abreu - oracle.j_value).abs(),
        kkt_residual: oracle.kkt_residual,
        kkt_tol: p.config.tolerances.kkt_tol,
        duality_gap: oracle.duality_gap,
    };
    dir.write_json("compare_summary.json", &summary)?;
    if !(oracle.kkt_residual <= summary.kkt_tol) {
        return Err(CliError::Oracle(format!(
            "KKT residual {:e} exceeds kkt_tol {:e}",
            oracle.kkt_residual, summary.kkt_tol
        )));
    }
    Ok(format!(
        "max |u_abreu - u_direct| on inner window = {worst:e}, |ΔJ| = {:e}",
        summary.j_abs_diff
    ))
}

#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub status: &'static str,
    pub eps: f64,
    pub n: usize,
    pub max_residual: f64,
    pub el_tol: f64,
    pub test_functions: usize,
}

fn cmd_verify(
    p: &Prepared,
    dir: &mut OutputDir,
    stages: &mut Vec<StageSummary>,
) -> Result<String, CliError> {
    let sweep = run_sweep(p)?;
    stages.extend(
        sweep
            .stages
            .iter()
            .enumerate()
            .map(|(k, s)| stage_summary(k, s)),
    );
    if let Some(e) = sweep_failure(&sweep) {
        return Err(e);
    }
    let last = sweep.last().expect("a validated schedule has a stage");
    let g = &p.setup.grid;
    let fam = TestFunctionFamily::default_for(g, TEST_FUNCTIONS)
        .map_err(|e| ConfigError::Invalid(format!("grid too coarse for the test family: {e}")))?;
    let w = rescaled_w(last, &p.setup).map_err(|e| CliError::Solver(e.to_string()))?;
    let res = distributional_residual(&w, &last.u, &p.setup, &fam)
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let mut table = Table::new(&[
        "index", "center", "radius", "lhs", "source", "flux", "residual",
    ]);
    for r in &res.rows {
        let mut row = vec![r.index.to_string()];
        row.extend([r.center, r.radius, r.lhs, r.source, r.flux, r.residual].map(fmt_f64));
        table.row(row);
    }
    dir.write("el_residuals.csv", &table.into_bytes())?;
    let el_tol = p.config.tolerances.el_tol;
    let pass = res.max <= el_tol;
    let summary = VerifySummary {
        status: if pass { "PASS" } else { "FAIL" },
        eps: last.eps,
        n: g.n(),
        max_residual: res.max,
        el_tol,
        test_functions: fam.len(),
    };
    dir.write_json("verify_summary.json", &summary)?;
    if !pass {
        warn!("weak residual {:e} above el_tol {:e}", res.max, el_tol);
    }
    Ok(format!(
        "{}: max weak residual {:e} (tol {el_tol:e})",
        summary.status, res.max
    ))
}
