//! Problem definitions: linear dynamics, admissible control sets, quadratic
//! terminal targets, and solver settings.
//!
//! A [`HopfProblem`] bundles the dynamics `x' = A x + B u` with the control
//! constraint `u = Q c`, `c` in the unit set, and an origin-centered
//! ellipsoidal target `{ x : <x, W^-1 x> <= level }`. All types are plain
//! data and immutable after construction; they can be shared freely across
//! worker threads.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{HopfError, Result, ValidationReport};

/// Linear time-invariant dynamics `x' = A x + B u` with control scaling `Q`.
///
/// The admissible control is `u = Q c` with `c` in the unit control set, so
/// `Q` converts the unit box/ball into the problem-specific bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>) -> Self {
        Self { a, b, q }
    }

    /// State dimension.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Control dimension.
    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Closed convex admissible set for the unit control `c`.
///
/// Both variants contain the origin in their interior, which is what makes
/// the support function a norm and its conjugate an indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSet {
    /// `{ c : |c_i| <= 1 for all i }`
    UnitBox { dim: usize },
    /// `{ c : ||c||_2 <= 1 }`
    UnitBall { dim: usize },
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match *self {
            ControlSet::UnitBox { dim } | ControlSet::UnitBall { dim } => dim,
        }
    }
}

/// Origin-centered ellipsoidal target `{ x : <x, W^-1 x> <= level }`.
///
/// `W` must be symmetric positive definite. The implied terminal cost
/// `J(x) = <x, W^-1 x> - level` is negative inside the target, zero on its
/// boundary and positive outside.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTarget {
    pub w: DMatrix<f64>,
    pub level: f64,
}

impl QuadraticTarget {
    pub fn new(w: DMatrix<f64>, level: f64) -> Self {
        Self { w, level }
    }

    /// Ball of the given radius: `W = radius^2 I`, level 1.
    pub fn ball(dim: usize, radius: f64) -> Self {
        Self {
            w: DMatrix::identity(dim, dim) * radius * radius,
            level: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Terminal cost `<x, W^-1 x> - level`.
    ///
    /// One-off convenience; hot paths should hold a [`TargetCost`] so the
    /// factorization of `W` is reused.
    pub fn terminal_cost_x(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.factor()?.cost(x))
    }

    /// Cache the symmetric factorization of `W` for repeated evaluation.
    pub fn factor(&self) -> Result<TargetCost> {
        TargetCost::new(self)
    }
}

/// Cached Cholesky factorization of the target shape matrix `W`.
///
/// Evaluates `J(x) = <x, W^-1 x> - level` with a triangular solve instead of
/// an explicit inverse, which stays accurate for ill-conditioned ellipsoids.
#[derive(Debug, Clone)]
pub struct TargetCost {
    chol: Cholesky<f64, Dyn>,
    level: f64,
    dim: usize,
}

impl TargetCost {
    pub fn new(target: &QuadraticTarget) -> Result<Self> {
        let w = &target.w;
        if w.nrows() != w.ncols() {
            return Err(HopfError::DimensionMismatch(format!(
                "target W must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        check_symmetric(w, "target W")?;
        let chol = Cholesky::new(w.clone())
            .ok_or_else(|| HopfError::NotPositiveDefinite("target W".into()))?;
        Ok(Self {
            chol,
            level: target.level,
            dim: w.nrows(),
        })
    }

    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.dim, "state dimension mismatch");
        let y = self.chol.solve(x);
        x.dot(&y) - self.level
    }

    /// Solves `W v = rhs`.
    pub fn solve_w(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

/// Quadrature rule used to discretize the running Hamiltonian integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// N nodes at `t_i = i*dt`, weight `dt` each.
    #[default]
    LeftRiemann,
    /// N+1 nodes at `t_i = i*dt`, end weights `dt/2`, interior weights `dt`.
    Trapezoid,
}

/// A complete point-wise solvable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfProblem {
    pub system: LinearSystem,
    pub control_set: ControlSet,
    pub target: QuadraticTarget,
    /// Number of quadrature intervals N (so `dt = T / N`).
    pub quadrature_n: usize,
    pub quadrature_rule: QuadratureRule,
}

impl HopfProblem {
    pub fn new(system: LinearSystem, control_set: ControlSet, target: QuadraticTarget) -> Self {
        Self {
            system,
            control_set,
            target,
            quadrature_n: 100,
            quadrature_rule: QuadratureRule::LeftRiemann,
        }
    }

    pub fn with_quadrature(mut self, n: usize, rule: QuadratureRule) -> Self {
        self.quadrature_n = n;
        self.quadrature_rule = rule;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    pub fn validate(&self) -> std::result::Result<(), ValidationReport> {
        validate(self)
    }
}

/// How the dual step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    /// `sigma = norm_safety / (tau * ||K||^2)`.
    Auto,
    /// Fixed dual step; `tau*sigma*||K||^2 < 1` is checked at solve time.
    Explicit(f64),
}

/// Primal-dual solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Primal step size.
    pub tau: f64,
    pub sigma: SigmaRule,
    /// Over-relaxation parameter in `[0, 1]`.
    pub theta: f64,
    /// Residual tolerance; iteration stops when both residuals drop below it.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Multiplier in `(0, 1]` applied to the automatic sigma bound so the
    /// step-size condition holds strictly.
    pub norm_safety: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            sigma: SigmaRule::Auto,
            theta: 1.0,
            epsilon: 1e-4,
            max_iter: 100_000,
            norm_safety: 0.99,
        }
    }
}

impl SolverConfig {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

const SYMMETRY_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(HopfError::NotPositiveDefinite(format!(
                    "{what} is not symmetric"
                )));
            }
        }
    }
    Ok(())
}

/// Check every structural invariant of a problem, collecting all violations.
pub fn validate(problem: &HopfProblem) -> std::result::Result<(), ValidationReport> {
    let mut violations = Vec::new();
    let sys = &problem.system;
    let n = sys.a.nrows();
    let m = sys.q.nrows();

    if n == 0 {
        violations.push(HopfError::DimensionMismatch("state dimension is zero".into()));
    }
    if sys.b.ncols() == 0 {
        violations.push(HopfError::DimensionMismatch(
            "control dimension is zero".into(),
        ));
    }
    if sys.a.ncols() != n {
        violations.push(HopfError::DimensionMismatch(format!(
            "A must be square, got {}x{}",
            sys.a.nrows(),
            sys.a.ncols()
        )));
    }
    if sys.b.nrows() != n {
        violations.push(HopfError::DimensionMismatch(format!(
            "B must have {} rows to match A, got {}",
            n,
            sys.b.nrows()
        )));
    }
    if sys.q.ncols() != m || sys.b.ncols() != m {
        violations.push(HopfError::DimensionMismatch(format!(
            "Q must be square with side equal to B's column count ({}), got {}x{}",
            sys.b.ncols(),
            sys.q.nrows(),
            sys.q.ncols()
        )));
    }
    if problem.control_set.dim() != sys.b.ncols() {
        violations.push(HopfError::DimensionMismatch(format!(
            "control set dimension {} does not match B's column count {}",
            problem.control_set.dim(),
            sys.b.ncols()
        )));
    }
    if problem.target.dim() != n || problem.target.w.ncols() != n {
        violations.push(HopfError::DimensionMismatch(format!(
            "target W must be {n}x{n}, got {}x{}",
            problem.target.w.nrows(),
            problem.target.w.ncols()
        )));
    }
    if problem.quadrature_n == 0 {
        violations.push(HopfError::InvalidConfig(
            "quadrature_n must be at least 1".into(),
        ));
    }

    // SPD check on W (only meaningful once the shape matches).
    if problem.target.w.nrows() == problem.target.w.ncols() {
        if let Err(e) = TargetCost::new(&problem.target) {
            violations.push(e);
        }
    }
    if !(problem.target.level > 0.0) {
        violations.push(HopfError::InvalidConfig(format!(
            "target level must be positive, got {}",
            problem.target.level
        )));
    }

    // Q full rank via singular values.
    if sys.q.nrows() == sys.q.ncols() && sys.q.nrows() > 0 {
        let svals = sys.q.clone().singular_values();
        let smax = svals.max();
        let smin = svals.min();
        if !(smin > RANK_TOL * smax.max(1.0)) {
            violations.push(HopfError::SingularScaling);
        }
    }

    for (name, m) in [("A", &sys.a), ("B", &sys.b), ("Q", &sys.q), ("W", &problem.target.w)] {
        if m.iter().any(|v| !v.is_finite()) {
            violations.push(HopfError::NonFinite(match name {
                "A" => "system matrix A",
                "B" => "input matrix B",
                "Q" => "scaling matrix Q",
                _ => "target matrix W",
            }));
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn double_integrator_is_valid() {
        let problem = scenarios::double_integrator(0.2);
        assert!(problem.validate().is_ok());
    }

    #[test]
    fn zero_w_is_not_positive_definite() {
        let mut problem = scenarios::double_integrator(0.2);
        problem.target.w = DMatrix::zeros(2, 2);
        let report = problem.validate().unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, HopfError::NotPositiveDefinite(_))));
    }

    #[test]
    fn wrong_b_shape_is_dimension_mismatch() {
        let mut problem = scenarios::double_integrator(0.2);
        problem.system.b = DMatrix::zeros(3, 1);
        let report = problem.validate().unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, HopfError::DimensionMismatch(_))));
    }

    #[test]
    fn singular_q_is_rejected() {
        let mut problem = scenarios::double_integrator(0.2);
        problem.system.q = DMatrix::zeros(1, 1);
        let report = problem.validate().unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, HopfError::SingularScaling)));
    }

    #[test]
    fn terminal_cost_center_boundary_outside() {
        let target = QuadraticTarget::ball(2, 0.2);
        let center = DVector::from_column_slice(&[0.0, 0.0]);
        assert_eq!(target.terminal_cost_x(&center).unwrap(), -1.0);

        let boundary = DVector::from_column_slice(&[0.2, 0.0]);
        assert!(target.terminal_cost_x(&boundary).unwrap().abs() < 1e-12);

        // W = 0.04 I, x = (1, 0): 1/0.04 - 1 = 24, cross-checked by a
        // linear solve instead of an explicit inverse.
        let x = DVector::from_column_slice(&[1.0, 0.0]);
        let j = target.terminal_cost_x(&x).unwrap();
        assert!((j - 24.0).abs() < 1e-10);
        let w_inv_x = target.factor().unwrap().solve_w(&x);
        assert!((x.dot(&w_inv_x) - target.level - j).abs() < 1e-12);
    }

    #[test]
    fn terminal_cost_sign_trichotomy() {
        // Anisotropic SPD W built from an eigendecomposition, so points
        // inside/on/outside are constructed analytically.
        let q = DMatrix::from_column_slice(
            2,
            2,
            &[
                std::f64::consts::FRAC_1_SQRT_2,
                std::f64::consts::FRAC_1_SQRT_2,
                -std::f64::consts::FRAC_1_SQRT_2,
                std::f64::consts::FRAC_1_SQRT_2,
            ],
        );
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.09, 4.0]));
        let w = &q * lambda * q.transpose();
        let target = QuadraticTarget::new(w, 1.0);
        let cost = target.factor().unwrap();

        // Along the first eigenvector the boundary sits at sqrt(0.09) = 0.3.
        let dir = q.column(0).into_owned();
        let inside = DVector::from(&dir * 0.15);
        let on = DVector::from(&dir * 0.3);
        let outside = DVector::from(&dir * 0.9);
        assert!(cost.cost(&inside) < 0.0);
        assert!(cost.cost(&on).abs() < 1e-12);
        assert!(cost.cost(&outside) > 0.0);
    }
}
