//! Scenario config files: strict TOML with `system`, `control_set`,
//! `target`, `solver`, and `query` sections. Unknown keys are rejected so
//! typos surface instead of silently falling back to defaults.

use hopf_core::problem::{
    ControlSet, HopfProblem, LinearSystem, QuadraticTarget, QuadratureRule, SigmaRule,
    SolverConfig,
};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub control_set: ControlSection,
    pub target: TargetSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub query: QuerySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub kind: ControlKind,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Box,
    Ball,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// Shorthand for `w = radius^2 * I`.
    pub radius: Option<f64>,
    pub w: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tau: TauSpec,
    pub sigma: SigmaSpec,
    pub theta: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub quadrature_n: usize,
    pub quadrature_rule: RuleSpec,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tau: TauSpec::Named(BalancedTag::Balanced),
            sigma: SigmaSpec::Named(AutoTag::Auto),
            theta: 1.0,
            epsilon: 1e-4,
            max_iter: 100_000,
            quadrature_n: 100,
            quadrature_rule: RuleSpec::LeftRiemann,
        }
    }
}

/// Primal step: a number, or "balanced" for `2 / ||M||` resolved per solve.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    Fixed(f64),
    Named(BalancedTag),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancedTag {
    Balanced,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Fixed(f64),
    Named(AutoTag),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum RuleSpec {
    #[serde(rename = "left-riemann")]
    LeftRiemann,
    #[serde(rename = "trapezoid")]
    Trapezoid,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Value,
    MinTime,
    Trajectory,
    Grid,
    Unscented,
    Bench,
}

impl QueryKind {
    pub fn name(&self) -> &'static str {
        match self {
            QueryKind::Value => "value",
            QueryKind::MinTime => "min_time",
            QueryKind::Trajectory => "trajectory",
            QueryKind::Grid => "grid",
            QueryKind::Unscented => "unscented",
            QueryKind::Bench => "bench",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySection {
    pub kind: QueryKind,
    /// Query state (also the mean for `unscented`).
    pub x0: Option<Vec<f64>>,
    /// Horizon for `value`.
    pub t: Option<f64>,
    /// Upper bracket end for the minimum-time search.
    pub t_max: Option<f64>,
    /// Grid: per-axis [lo, hi].
    pub bounds: Option<Vec<[f64; 2]>>,
    pub resolution: Option<Vec<usize>>,
    /// Grid: explicit horizon list ...
    pub horizons: Option<Vec<f64>>,
    /// ... or ten equally spaced horizons on (0, t_star].
    pub t_star: Option<f64>,
    /// Unscented: initial-state covariance, full matrix ...
    pub cov: Option<Vec<Vec<f64>>>,
    /// ... or isotropic standard deviation.
    pub std: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    /// Unscented: mean-square-error bound; defaults to the target level
    /// scaled by the (isotropic) target radius squared.
    pub mse_level: Option<f64>,
    /// Bench: problem dimensions (even, samples are planar).
    pub dims: Option<Vec<usize>>,
    pub trials: Option<usize>,
}

/// A config error with the offending key spelled out.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(ConfigError(format!("{what} must be a non-empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError(format!("{what} must be rectangular")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    /// Build and validate the core problem plus solver settings.
    pub fn build(&self) -> Result<(HopfProblem, SolverSettings), ConfigError> {
        let a = matrix(&self.system.a, "system.a")?;
        let b = matrix(&self.system.b, "system.b")?;
        let q = matrix(&self.system.q, "system.q")?;
        let n = a.nrows();
        let m = b.ncols();
        let system = LinearSystem::new(a, b, q);

        let control_set = match self.control_set.kind {
            ControlKind::Box => ControlSet::UnitBox { dim: m },
            ControlKind::Ball => ControlSet::UnitBall { dim: m },
        };

        let target = match (&self.target.radius, &self.target.w) {
            (Some(r), None) => {
                let mut t = QuadraticTarget::ball(n, *r);
                t.level = self.target.level;
                t
            }
            (None, Some(w)) => QuadraticTarget::new(matrix(w, "target.w")?, self.target.level),
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "target accepts either radius or w, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError("target requires either radius or w".into()))
            }
        };

        let problem = HopfProblem {
            system,
            control_set,
            target,
            quadrature_n: self.solver.quadrature_n,
            quadrature_rule: match self.solver.quadrature_rule {
                RuleSpec::LeftRiemann => QuadratureRule::LeftRiemann,
                RuleSpec::Trapezoid => QuadratureRule::Trapezoid,
            },
        };
        problem
            .validate()
            .map_err(|report| ConfigError(report.to_string()))?;

        let settings = SolverSettings {
            tau: self.solver.tau,
            base: SolverConfig {
                tau: 1.0,
                sigma: match self.solver.sigma {
                    SigmaSpec::Fixed(s) => SigmaRule::Explicit(s),
                    SigmaSpec::Named(_) => SigmaRule::Auto,
                },
                theta: self.solver.theta,
                epsilon: self.solver.epsilon,
                max_iter: self.solver.max_iter,
                norm_safety: 0.99,
            },
        };
        Ok((problem, settings))
    }
}

/// Solver settings with the primal step possibly deferred to the balanced
/// rule, which needs the prepared problem.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub tau: TauSpec,
    base: SolverConfig,
}

impl SolverSettings {
    /// Resolve the step size against a prepared horizon.
    pub fn for_prepared(&self, prepared: &hopf_core::Prepared) -> SolverConfig {
        let tau = match self.tau {
            TauSpec::Fixed(t) => t,
            TauSpec::Named(_) => prepared.balanced_tau(),
        };
        SolverConfig {
            tau,
            ..self.base.clone()
        }
    }

    pub fn override_tau(&mut self, tau: f64) {
        self.tau = TauSpec::Fixed(tau);
    }

    pub fn override_epsilon(&mut self, epsilon: f64) {
        self.base.epsilon = epsilon;
    }

    pub fn override_max_iter(&mut self, max_iter: usize) {
        self.base.max_iter = max_iter;
    }
}

pub fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
