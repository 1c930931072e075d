//! Run configuration: one JSON document per run.

use abreu1d_core::{
    EpsSchedule, Grid, LagrangianSpec, MinimizeOptions, NewtonOptions, Polynomial, ProblemSetup,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Tolerance on `|φ(±1)|` checked at load.
pub const PHI_BOUNDARY_LOAD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub a: f64,
    pub b: f64,
}

fn unit_weight() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianConfig {
    /// `rochet_chone`, `zero`, or a registered custom id.
    pub preset: String,
    /// Ascending coefficients of `η0`.
    #[serde(default = "unit_weight")]
    pub eta0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Geometric {
        start: f64,
        ratio: f64,
        stages: usize,
    },
    List(Vec<f64>),
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> EpsSchedule<f64> {
        match self {
            Self::Geometric {
                start,
                ratio,
                stages,
            } => EpsSchedule::Geometric {
                start: *start,
                ratio: *ratio,
                stages: *stages,
            },
            Self::List(v) => EpsSchedule::Explicit(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub newton_tol_scale: f64,
    pub convexity_floor_scale: f64,
    /// Oracle KKT residual above this is an oracle failure.
    pub kkt_tol: f64,
    /// PASS threshold for the weak Euler–Lagrange residual.
    pub el_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol_scale: 1e-10,
            convexity_floor_scale: 1e-3,
            kkt_tol: 1e-8,
            el_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    /// Ascending coefficients of the obstacle `φ`.
    pub phi: Vec<f64>,
    pub lagrangian: LagrangianConfig,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub eps_schedule: ScheduleConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory.
    pub outputs: PathBuf,
}

/// Registered Lagrangians besides the two built-in presets.
pub const CUSTOM_LAGRANGIANS: &[&str] = &["quadratic_tracking"];

/// A configuration that passed every load-time check.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    /// Setup at the first scheduled ε.
    pub setup: ProblemSetup<f64>,
    pub eps: Vec<f64>,
    pub newton: NewtonOptions<f64>,
    pub minimize: MinimizeOptions<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        let g = &self.grid;
        let grid = Grid::new(g.n, g.a, g.b).map_err(|e| invalid(e.to_string()))?;
        let phi = Polynomial::new(self.phi.clone());
        let (left, right) = (phi.eval(-1.0), phi.eval(1.0));
        if left.abs() > PHI_BOUNDARY_LOAD_TOL || right.abs() > PHI_BOUNDARY_LOAD_TOL {
            return Err(invalid(format!(
                "obstacle must satisfy φ(±1) = 0: φ(-1) = {left}, φ(1) = {right}"
            )));
        }
        let eta0 = Polynomial::new(self.lagrangian.eta0.clone());
        let lag = match self.lagrangian.preset.as_str() {
            "rochet_chone" => LagrangianSpec::rochet_chone(&eta0, grid.nodes()),
            "zero" => Ok(LagrangianSpec::zero()),
            "quadratic_tracking" => LagrangianSpec::quadratic_tracking(&eta0, grid.nodes()),
            other => {
                return Err(invalid(format!(
                    "unknown lagrangian preset {other:?}; expected rochet_chone, zero or one of {CUSTOM_LAGRANGIANS:?}"
                )))
            }
        }
        .map_err(|e| invalid(e.to_string()))?;

        let schedule = self.eps_schedule.to_schedule();
        let eps = schedule.validate().map_err(|e| invalid(e.to_string()))?;
        let setup = ProblemSetup::new(grid, lag, phi, self.rho_minus, self.rho_plus, eps[0])
            .map_err(|e| invalid(e.to_string()))?;
        log::info!("obstacle convexity constant c0 = {}", setup.c0);

        let t = &self.tolerances;
        for (name, v) in [
            ("newton_tol_scale", t.newton_tol_scale),
            ("convexity_floor_scale", t.convexity_floor_scale),
            ("kkt_tol", t.kkt_tol),
            ("el_tol", t.el_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!(
                    "tolerance {name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        if !(t.newton_tol_scale > 0.0) {
            return Err(invalid(
                "tolerance newton_tol_scale must be positive".into(),
            ));
        }
        let newton = NewtonOptions {
            tol_scale: t.newton_tol_scale,
            convexity_floor_scale: t.convexity_floor_scale,
            ..NewtonOptions::default()
        };
        Ok(Prepared {
            config: self.clone(),
            setup,
            eps,
            newton,
            minimize: MinimizeOptions::default(),
        })
    }
}
