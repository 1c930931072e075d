use abreu1d_cli::config::{GridConfig, LagrangianConfig, RunConfig, ScheduleConfig, Tolerances};
use proptest::prelude::*;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CALIBRATION: &str = r#"{
  "grid": { "n": 64, "a": -0.5, "b": 0.5 },
  "phi": [-1.0, 0.0, 1.0],
  "lagrangian": { "preset": "rochet_chone", "eta0": [1.0] },
  "rho_minus": 0.5,
  "rho_plus": 0.5,
  "eps_schedule": { "start": 0.1, "ratio": 0.5, "stages": 11 },
  "outputs": "unused"
}"#;

const SINGLE_EPS: &str = r#""eps_schedule": [0.01]"#;
const GEOMETRIC: &str = r#""eps_schedule": { "start": 0.1, "ratio": 0.5, "stages": 11 }"#;

struct Run {
    dir: tempfile::TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().unwrap()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.out.join(name)).unwrap()
    }

    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_slice(&self.read(name)).unwrap()
    }
}

fn run_with(verb: &str, config: &str, out: Option<&dyn Fn(&Path) -> PathBuf>) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = match out {
        Some(f) => f(dir.path()),
        None => dir.path().join("out"),
    };
    let output = Command::new(env!("CARGO_BIN_EXE_abreu1d"))
        .args([verb, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("ABREU1D_LOG", "quiet")
        .output()
        .unwrap();
    Run { dir, out, output }
}

fn run(verb: &str, config: &str) -> Run {
    run_with(verb, config, None)
}

fn csv_rows(bytes: &[u8]) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(bytes)
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn solve_calibration_recovers_exact_solution() {
    let r = run("solve", &CALIBRATION.replace(GEOMETRIC, SINGLE_EPS));
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let bytes = r.read("solution.csv");
    assert!(bytes.starts_with(b"x,u,u_prime,u_pp,w,f_eps\n"));
    let rows = csv_rows(&bytes);
    assert_eq!(rows.len(), 65);
    let mid = &rows[32];
    assert_eq!(mid[0].parse::<f64>().unwrap(), 0.0);
    assert!((mid[1].parse::<f64>().unwrap() + 1.0).abs() <= 1e-8);
    assert!(!bytes.contains(&b'\r'));
}

#[test]
fn solve_rejects_multi_stage_schedule() {
    let r = run("solve", CALIBRATION);
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("single-ε"), "{}", r.stderr());
}

#[test]
fn sweep_calibration_writes_every_artifact() {
    let r = run("sweep", CALIBRATION);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let sweep = r.read("sweep.csv");
    assert!(sweep.starts_with(
        b"stage,eps,sup_u,sup_grad_ab,min_upp_ab,max_w_ab,penalty_l2,eps_uprime_left,eps_uprime_right,j_val,j_eps_val,int_inv_upp,newton_iters,final_residual\n"
    ));
    assert_eq!(csv_rows(&sweep).len(), 11);
    for k in 0..11 {
        assert!(r.out.join(format!("solution_{k:02}.csv")).exists());
    }
    let bounds = r.json("bounds.json");
    assert!(bounds["checks"].as_array().unwrap().len() >= 7);
    let rates = csv_rows(&r.read("rates.csv"));
    assert!(rates
        .iter()
        .any(|row| &row[0] == "penalty_l2" && &row[3] == "identically_small"));

    // every file the manifest lists exists with the recorded hash
    let m = r.json("manifest.json");
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["stages"].as_array().unwrap().len(), 11);
    for f in m["files"].as_array().unwrap() {
        let bytes = r.read(f["name"].as_str().unwrap());
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (run("compare", CALIBRATION), run("compare", CALIBRATION));
    assert_eq!(a.code(), 0);
    let names: Vec<String> = a.json("manifest.json")["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.iter().any(|n| n == "compare.csv"));
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(a.read(n), b.read(n), "{n}");
    }
}

#[test]
fn configuration_errors_exit_1() {
    let cases = [
        (r#""rho_minus": 0.5"#, r#""rho_minus": 0.0"#, "ρ± > 0"),
        (r#""a": -0.5, "b": 0.5"#, r#""a": 0.5, "b": 0.5"#, ""),
        (
            GEOMETRIC,
            r#""eps_schedule": { "start": 0.5, "ratio": 2, "stages": 3 }"#,
            "",
        ),
        (r#""rho_plus": 0.5,"#, "", "rho_plus"),
        (
            r#""phi": [-1.0, 0.0, 1.0]"#,
            r#""phi": [-1.0, 0.0, 1.5]"#,
            "φ(±1)",
        ),
    ];
    for (from, to, needle) in cases {
        let text = CALIBRATION.replace(from, to);
        assert_ne!(text, CALIBRATION);
        let r = run("sweep", &text);
        assert_eq!(r.code(), 1, "{to}: {}", r.stderr());
        assert!(r.stderr().contains(needle), "{}", r.stderr());
    }
}

#[test]
fn unwritable_output_directory_exits_1() {
    let r = run_with(
        "sweep",
        CALIBRATION,
        Some(&|d: &Path| {
            let file = d.join("plain-file");
            std::fs::write(&file, b"").unwrap();
            file.join("out")
        }),
    );
    assert_eq!(r.code(), 1, "{}", r.stderr());
    assert!(r.stderr().contains("not writable"));
    drop(r.dir);
}

#[test]
fn unattainable_kkt_tolerance_is_oracle_failure() {
    let text = CALIBRATION.replace(
        r#""outputs""#,
        r#""tolerances": { "kkt_tol": 1e-16 }, "outputs""#,
    );
    let r = run("compare", &text);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    assert!(r.out.join("compare_summary.json").exists());
    assert!(r.json("manifest.json")["status"]
        .as_str()
        .unwrap()
        .contains("exit 3"));
}

#[test]
fn compare_reports_agreement_on_calibration() {
    let r = run("compare", CALIBRATION);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!(r
        .read("compare.csv")
        .starts_with(b"x,u_abreu_smallest_eps,u_direct,abs_diff\n"));
    let s = r.json("compare_summary.json");
    assert!(s["max_abs_diff_inner"].as_f64().unwrap() <= 5e-3);
    assert!(s["kkt_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn verify_reports_pass_and_fail_with_exit_0() {
    let fine = CALIBRATION
        .replace(r#""n": 64"#, r#""n": 512"#)
        .replace(GEOMETRIC, r#""eps_schedule": [0.1, 0.01, 0.001, 0.0001]"#);
    let r = run("verify", &fine);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.json("verify_summary.json")["status"], "PASS");
    assert_eq!(csv_rows(&r.read("el_residuals.csv")).len(), 10);

    let strict = fine.replace(
        r#""outputs""#,
        r#""tolerances": { "el_tol": 0 }, "outputs""#,
    );
    let r = run("verify", &strict);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.json("verify_summary.json")["status"], "FAIL");
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let bin = env!("CARGO_BIN_EXE_abreu1d");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["sweep"]), Some(1));
    assert_eq!(code(&["frobnicate", "--config", "x"]), Some(1));
    assert_eq!(
        code(&["sweep", "--config", "/nonexistent/config.json"]),
        Some(1)
    );
    assert_eq!(code(&["--help"]), Some(0));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip_is_bit_exact(
        n in 1usize..10_000,
        a in finite(),
        b in finite(),
        phi in prop::collection::vec(finite(), 0..6),
        eta0 in prop::collection::vec(finite(), 0..4),
        rho in (finite(), finite()),
        sched in prop_oneof![
            (finite(), finite(), 0usize..20).prop_map(|(start, ratio, stages)| ScheduleConfig::Geometric { start, ratio, stages }),
            prop::collection::vec(finite(), 0..8).prop_map(ScheduleConfig::List),
        ],
        tol in (finite(), finite(), finite(), finite()),
    ) {
        let c = RunConfig {
            grid: GridConfig { n, a, b },
            phi,
            lagrangian: LagrangianConfig { preset: "rochet_chone".into(), eta0 },
            rho_minus: rho.0,
            rho_plus: rho.1,
            eps_schedule: sched,
            tolerances: Tolerances {
                newton_tol_scale: tol.0,
                convexity_floor_scale: tol.1,
                kkt_tol: tol.2,
                el_tol: tol.3,
            },
            outputs: "out/run".into(),
        };
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.grid.a.to_bits(), c.grid.a.to_bits());
        for (x, y) in back.phi.iter().zip(&c.phi) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn solver_failure_exits_2_and_names_last_stage() {
    // a floor above every admissible u'' makes each Newton trial step fail
    let steep = CALIBRATION
        .replace("[-1.0, 0.0, 1.0]", "[-3.0, 0.0, 3.0]")
        .replace(
            r#""outputs""#,
            r#""tolerances": { "convexity_floor_scale": 100 }, "outputs""#,
        );
    let r = run("sweep", &steep);
    assert_eq!(r.code(), 2, "{}", r.stderr());
    assert!(
        r.stderr().contains("last completed stage: none"),
        "{}",
        r.stderr()
    );
    assert!(r.out.join("manifest.json").exists());
    let r = run("solve", &steep.replace(GEOMETRIC, SINGLE_EPS));
    assert_eq!(r.code(), 2, "{}", r.stderr());
}
