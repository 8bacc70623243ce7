//! Direct reconstruction of the optimal trajectory and control from the
//! Hopf minimizer. No further optimization is involved: the path is a
//! running partial sum of Hamiltonian gradients.
//!
//! # Time labeling
//!
//! The dynamic-programming recursion builds the path from the optimal
//! *terminal* state backward: the bare conjugate gradient `1/2 M p*` is the
//! terminal state in transformed coordinates, and each added term
//! `dt * grad_h(p*, i)` steps one quadrature interval toward the initial
//! state (the final cumulative sum recovers `z0` up to solver tolerance,
//! which is exactly stationarity of the Hopf objective). The public
//! [`Trajectory`] relabels this chain so that `times` run forward from `0`
//! to `T*`: sample `j` is the chain entry `count - j`. Controls are indexed
//! so that `controls[j]` is held (zero-order) on `[t_j, t_{j+1})`; the last
//! entry repeats for the terminal row. This forward labeling is what the
//! playback consistency tests pin down.

use nalgebra::{DMatrix, DVector, SVD};

use crate::convex::QuadraticConjugate;
use crate::error::{HopfError, Result};
use crate::matexp::{assemble_stack, expm, StackedOperator};
use crate::problem::{ControlSet, HopfProblem, LinearSystem, QuadratureRule};

/// Optimal trajectory samples in both coordinate systems plus the control.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Forward times `0, dt, ..., T*`.
    pub times: Vec<f64>,
    /// States in the transformed (drift-free) coordinates.
    pub z_states: Vec<DVector<f64>>,
    /// States in the original coordinates, `x = e^{tA} z`.
    pub x_states: Vec<DVector<f64>>,
    /// Control held on `[t_j, t_{j+1})`; the final entry repeats.
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal_x(&self) -> &DVector<f64> {
        self.x_states.last().expect("trajectory is never empty")
    }

    pub fn terminal_z(&self) -> &DVector<f64> {
        self.z_states.last().expect("trajectory is never empty")
    }

    /// Write `t, z_1..z_n, x_1..x_n, u_1..u_m` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.z_states[0].len();
        let m = self.controls[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for j in 0..self.len() {
            let mut row = vec![format!("{}", self.times[j])];
            row.extend(self.z_states[j].iter().map(|v| format!("{v}")));
            row.extend(self.x_states[j].iter().map(|v| format!("{v}")));
            row.extend(self.controls[j].iter().map(|v| format!("{v}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Gradient of the conjugate terminal cost: `1/2 M p`. Evaluated at the
/// Hopf minimizer this is the optimal terminal state in transformed
/// coordinates.
pub fn grad_j_star(conj: &QuadraticConjugate, p: &DVector<f64>) -> DVector<f64> {
    (&conj.m * p) * 0.5
}

/// Supergradient selection of the block Hamiltonian: `K_i^T c*` where `c*`
/// maximizes `<K_i p, c>` over the control set.
pub fn grad_h(
    stack: &StackedOperator,
    set: &ControlSet,
    p: &DVector<f64>,
    i: usize,
) -> DVector<f64> {
    let k = stack.block(i);
    let c = set.support_point(&(k * p));
    k.transpose() * c
}

const CONTROL_RESIDUAL_TOL: f64 = 1e-6;

/// Reconstruct the optimal trajectory from a converged Hopf minimizer.
///
/// Runs the cumulative-sum recursion (one Hamiltonian gradient per
/// quadrature node, `O(N)` total), maps to original coordinates through
/// `e^{tA}`, and extracts the control per node by least squares against the
/// Hamiltonian gradient. The least-squares residual doubles as a
/// consistency check: a residual above `1e-6 * (1 + ||grad||)` means the
/// maximizer is not attained by any feasible control (rank-deficient `B`),
/// reported as [`HopfError::ControlInconsistent`].
pub fn reconstruct(
    p_star: &DVector<f64>,
    t_star: f64,
    problem: &HopfProblem,
) -> Result<Trajectory> {
    if problem.quadrature_rule != QuadratureRule::LeftRiemann {
        return Err(HopfError::InvalidConfig(
            "trajectory reconstruction requires the left-Riemann rule".into(),
        ));
    }
    let stack = assemble_stack(problem, t_star)?;
    let conj = QuadraticConjugate::for_horizon(
        &problem.system,
        &problem.target,
        t_star,
        DVector::zeros(problem.state_dim()),
    )?;
    reconstruct_with(p_star, &stack, &conj, problem)
}

/// Reconstruction on a pre-assembled stack (shared with the solve at `T*`).
pub fn reconstruct_with(
    p_star: &DVector<f64>,
    stack: &StackedOperator,
    conj: &QuadraticConjugate,
    problem: &HopfProblem,
) -> Result<Trajectory> {
    let set = &problem.control_set;
    let sys = &problem.system;
    let count = stack.count();
    let dt = stack.delta_t();

    // Backward chain: terminal state first, then one gradient per node.
    let grads: Vec<DVector<f64>> = (0..count).map(|i| grad_h(stack, set, p_star, i)).collect();
    let mut chain = Vec::with_capacity(count + 1);
    chain.push(grad_j_star(conj, p_star));
    for (i, g) in grads.iter().enumerate() {
        let next = chain.last().unwrap() + g * stack.weight(i);
        chain.push(next);
    }

    // Forward relabeling.
    let times: Vec<f64> = (0..=count).map(|j| j as f64 * dt).collect();
    let z_states: Vec<DVector<f64>> = (0..=count).map(|j| chain[count - j].clone()).collect();

    // x_j = e^{t_j A} z_j via the exact one-step propagator.
    let step = expm(&sys.a, dt)?;
    let mut propagator = DMatrix::identity(sys.state_dim(), sys.state_dim());
    let mut x_states = Vec::with_capacity(count + 1);
    for z in &z_states {
        x_states.push(&propagator * z);
        propagator = &step * &propagator;
    }

    let controls = extract_controls(&grads, stack, sys)?;

    Ok(Trajectory {
        times,
        z_states,
        x_states,
        controls,
    })
}

/// Per-node least-squares control extraction.
///
/// The Hamiltonian gradient at node `i` equals `-e^{-(T-t_i)A} B u` for the
/// control attaining the block maximum, so each `u` solves that linear
/// system; the solve is exact when `B` has full column rank. Controls are
/// returned in forward order with the last entry repeated.
fn extract_controls(
    grads: &[DVector<f64>],
    stack: &StackedOperator,
    sys: &LinearSystem,
) -> Result<Vec<DVector<f64>>> {
    let count = grads.len();
    let qt_lu = sys.q.transpose().lu();

    let mut forward = Vec::with_capacity(count + 1);
    for j in 0..count {
        let i = count - 1 - j;
        // D_i = e^{-(T - t_i)A} B recovered from the stored block:
        // K_i^T = -D_i Q, so D_i^T = Q^T \ (-K_i).
        let di_t = qt_lu
            .solve(&(-stack.block(i)))
            .ok_or(HopfError::SingularScaling)?;
        let di = di_t.transpose();

        let rhs = -&grads[i];
        let svd = SVD::new(di.clone(), true, true);
        let eps = svd.singular_values.max().max(1.0) * 1e-12;
        let u = svd
            .solve(&rhs, eps)
            .map_err(|_| HopfError::FactorizationFailed)?
            .column(0)
            .into_owned();

        let residual = (&di * &u - rhs).norm();
        let tolerance = CONTROL_RESIDUAL_TOL * (1.0 + grads[i].norm());
        if residual > tolerance {
            return Err(HopfError::ControlInconsistent {
                residual,
                tolerance,
            });
        }
        forward.push(u);
    }
    let last = forward
        .last()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(sys.control_dim()));
    forward.push(last);
    Ok(forward)
}

/// Zero-order-hold playback of a control sequence on `x' = A x + B u`.
///
/// Integrates with RK4 using `substeps` stages per control interval and
/// returns the state at every node time. `controls[j]` is held on
/// `[times[j], times[j+1])`.
pub fn simulate_control(
    system: &LinearSystem,
    x0: &DVector<f64>,
    times: &[f64],
    controls: &[DVector<f64>],
    substeps: usize,
) -> Vec<DVector<f64>> {
    assert!(substeps >= 1);
    assert_eq!(times.len(), controls.len());
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0.clone();
    states.push(x.clone());
    for j in 0..times.len().saturating_sub(1) {
        let h = (times[j + 1] - times[j]) / substeps as f64;
        let bu = &system.b * &controls[j];
        for _ in 0..substeps {
            x = rk4_step(&system.a, &bu, &x, h);
        }
        states.push(x.clone());
    }
    states
}

fn rk4_step(a: &DMatrix<f64>, bu: &DVector<f64>, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let f = |s: &DVector<f64>| a * s + bu;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}
