//! Point-wise value function solves via primal-dual proximal splitting.
//!
//! The discretized Hopf objective at one state and horizon,
//!
//! ```text
//! obj(p) = 1/4 <p, M p> + level + sum_i w_i ||K_i p||_* - <z0, p>,
//! ```
//!
//! is minimized with the Chambolle-Pock iteration
//!
//! ```text
//! y^{k+1}    = prox_{sigma F*}(y^k + sigma K pbar^k)
//! p^{k+1}    = prox_{tau G}(p^k - tau K^T y^{k+1})
//! pbar^{k+1} = p^{k+1} + theta (p^{k+1} - p^k),
//! ```
//!
//! which converges for tau*sigma*||K||^2 < 1. The dual prox is a per-block
//! projection onto the weight-scaled control set and splits across blocks.
//!
//! Stopping uses the step-size-scaled primal/dual residuals
//! `||(p^k - p^{k-1})/tau - K^T (y^k - y^{k-1})||` and
//! `||(y^k - y^{k-1})/sigma - K (p^k - p^{k-1})||`, both in the Euclidean
//! norm, compared against `epsilon`. Each iteration performs exactly two
//! operator applications (`K p` and `K^T y`); `K pbar` is recombined from
//! cached products, so the residuals come for free.

use nalgebra::DVector;

use crate::convex::{GProx, QuadraticConjugate};
use crate::error::{HopfError, Result};
use crate::matexp::{assemble_stack, StackedOperator};
use crate::problem::{ControlSet, HopfProblem, SigmaRule, SolverConfig};

/// Horizons at or below this value short-circuit to the terminal cost.
pub const MIN_HORIZON: f64 = 1e-9;

/// Result of one point-wise solve.
#[derive(Debug, Clone)]
pub struct HopfSolution {
    /// Value function phi(z0, T).
    pub value: f64,
    /// Minimizer of the Hopf objective; equals the spatial gradient of the
    /// value function where the latter is differentiable.
    pub minimizer: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// True when both residuals dropped below epsilon before `max_iter`.
    pub converged: bool,
}

/// Discretized Hopf objective value at `p`.
pub fn objective(
    p: &DVector<f64>,
    conj: &QuadraticConjugate,
    stack: &StackedOperator,
    set: &ControlSet,
) -> f64 {
    let kp = stack.apply(p);
    objective_with_product(p, &kp, conj, stack, set)
}

/// Objective evaluated from a precomputed `K p`.
fn objective_with_product(
    p: &DVector<f64>,
    kp: &DVector<f64>,
    conj: &QuadraticConjugate,
    stack: &StackedOperator,
    set: &ControlSet,
) -> f64 {
    let m = stack.block_rows();
    let mut hamiltonian = 0.0;
    for i in 0..stack.count() {
        let qi = kp.rows(i * m, m).into_owned();
        hamiltonian += stack.weight(i) * set.support(&qi);
    }
    conj.g_value(p) + hamiltonian
}

/// Stack, conjugate shape matrix, and control set prepared for one horizon.
///
/// Preparing once and solving at many states shares the dominant setup cost
/// (block assembly and the operator-norm estimate). The struct is immutable
/// and can be shared across threads.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stack: StackedOperator,
    pub m: nalgebra::DMatrix<f64>,
    pub level: f64,
    pub set: ControlSet,
}

/// Assemble the operator stack and conjugate data for `(problem, horizon)`.
pub fn prepare(problem: &HopfProblem, horizon: f64) -> Result<Prepared> {
    let stack = assemble_stack(problem, horizon)?;
    let conj = QuadraticConjugate::for_horizon(
        &problem.system,
        &problem.target,
        horizon,
        DVector::zeros(problem.state_dim()),
    )?;
    Ok(Prepared {
        stack,
        m: conj.m,
        level: problem.target.level,
        set: problem.control_set,
    })
}

impl Prepared {
    pub fn conjugate_for(&self, z0: &DVector<f64>) -> QuadraticConjugate {
        QuadraticConjugate::new(self.m.clone(), self.level, z0.clone())
    }

    /// Primal step size that balances the quadratic damping,
    /// `tau = 2 / ||M||`, so the prox matrix `I + tau/2 M` stays
    /// well-conditioned. A good default across problem scales; the dual
    /// step then follows from the automatic rule.
    pub fn balanced_tau(&self) -> f64 {
        let lambda_max = self.m.clone().symmetric_eigen().eigenvalues.max();
        if lambda_max > 0.0 {
            2.0 / lambda_max
        } else {
            1.0
        }
    }

    /// Run the primal-dual iteration at one state.
    pub fn solve(
        &self,
        z0: &DVector<f64>,
        config: &SolverConfig,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<HopfSolution> {
        let conj = self.conjugate_for(z0);
        solve_prepared(&conj, &self.stack, &self.set, config, warm_start)
    }
}

/// Solve the value function at `(z0, horizon)`.
///
/// Horizons at or below [`MIN_HORIZON`] return the terminal cost directly
/// with the exact quadratic minimizer `p* = 2 W^-1 z0`, avoiding the
/// degenerate zero-width quadrature. Negative horizons are rejected.
pub fn solve_hopf(
    z0: &DVector<f64>,
    horizon: f64,
    problem: &HopfProblem,
    config: &SolverConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<HopfSolution> {
    if horizon < 0.0 {
        return Err(HopfError::HorizonNonPositive(horizon));
    }
    if horizon <= MIN_HORIZON {
        let cost = problem.target.factor()?;
        let value = cost.cost(z0);
        let minimizer = cost.solve_w(z0) * 2.0;
        return Ok(HopfSolution {
            value,
            minimizer,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        });
    }
    prepare(problem, horizon)?.solve(z0, config, warm_start)
}

fn resolve_sigma(config: &SolverConfig, norm: f64) -> Result<f64> {
    let norm_sq = norm * norm;
    match config.sigma {
        SigmaRule::Auto => {
            if norm_sq == 0.0 {
                // K = 0: the dual plays no role; any positive step works.
                Ok(1.0)
            } else {
                Ok(config.norm_safety / (config.tau * norm_sq))
            }
        }
        SigmaRule::Explicit(sigma) => {
            let product = config.tau * sigma * norm_sq;
            if product >= 1.0 {
                Err(HopfError::StepSizeViolation(product))
            } else {
                Ok(sigma)
            }
        }
    }
}

/// Core iteration on prepared data.
///
/// The loop is allocation-free: each iteration performs exactly two
/// operator applications plus one cached SPD solve, all into reusable
/// buffers.
pub fn solve_prepared(
    conj: &QuadraticConjugate,
    stack: &StackedOperator,
    set: &ControlSet,
    config: &SolverConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<HopfSolution> {
    let sigma = resolve_sigma(config, stack.norm_estimate())?;
    let tau = config.tau;
    let theta = config.theta;
    let g_prox = GProx::new(conj, tau)?;
    let m = stack.block_rows();
    let count = stack.count();
    let rows = stack.rows();
    let n = conj.dim();

    let mut p = warm_start.cloned().unwrap_or_else(|| conj.z0.clone());
    let mut kp = stack.apply(&p);
    let mut kp_prev = kp.clone();
    let mut y = kp.clone();
    let mut kty = stack.apply_transpose(&y);

    let mut y_next = DVector::zeros(rows);
    let mut kty_next = DVector::zeros(n);
    let mut p_next = DVector::zeros(n);
    let mut kp_next = DVector::zeros(rows);

    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;
    let mut converged = false;

    while iterations < config.max_iter {
        // y_next = prox(y + sigma K pbar), with K pbar recombined from the
        // cached products: pbar = (1+theta) p - theta p_prev.
        for i in 0..rows {
            y_next[i] = y[i] + sigma * ((1.0 + theta) * kp[i] - theta * kp_prev[i]);
        }
        let y_slice = y_next.as_mut_slice();
        for b in 0..count {
            crate::convex::project_scaled_in_place(set, stack.weight(b), &mut y_slice[b * m..(b + 1) * m]);
        }

        stack.apply_transpose_into(&y_next, &mut kty_next);
        for i in 0..n {
            p_next[i] = p[i] - tau * kty_next[i];
        }
        g_prox.prox_mut(&mut p_next);
        stack.apply_into(&p_next, &mut kp_next);

        let mut pr = 0.0;
        for i in 0..n {
            let d = (p_next[i] - p[i]) / tau - (kty_next[i] - kty[i]);
            pr += d * d;
        }
        let mut dr = 0.0;
        for i in 0..rows {
            let d = (y_next[i] - y[i]) / sigma - (kp_next[i] - kp[i]);
            dr += d * d;
        }
        primal_residual = pr.sqrt();
        dual_residual = dr.sqrt();

        std::mem::swap(&mut kp_prev, &mut kp);
        std::mem::swap(&mut kp, &mut kp_next);
        std::mem::swap(&mut p, &mut p_next);
        std::mem::swap(&mut y, &mut y_next);
        std::mem::swap(&mut kty, &mut kty_next);
        iterations += 1;

        if primal_residual < config.epsilon && dual_residual < config.epsilon {
            converged = true;
            break;
        }
    }

    let value = -objective_with_product(&p, &kp, conj, stack, set);
    Ok(HopfSolution {
        value,
        minimizer: p,
        iterations,
        primal_residual,
        dual_residual,
        converged,
    })
}
