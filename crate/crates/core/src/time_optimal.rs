//! Minimum-time search: hybrid Newton-bisection root finding on the map
//! `T -> phi(x0, T)`.
//!
//! The time derivative of the value function satisfies the Hamilton-Jacobi
//! equation, so the Newton step needs no extra solves:
//! `t_next = t + phi / H_x(p*, x0)` with
//! `H_x(p, x0) = -<A x0, p> + sup_{c} <-Q^T B^T p, c>`. Newton is rejected
//! in favor of the bracket midpoint whenever the denominator is tiny or the
//! step leaves the bracket.

use nalgebra::DVector;

use crate::error::{HopfError, Result};
use crate::problem::{ControlSet, HopfProblem, LinearSystem, SolverConfig};
use crate::solver::{solve_hopf, HopfSolution};

/// Hamiltonian of the untransformed dynamics evaluated at a costate.
pub fn hamiltonian_x(
    p: &DVector<f64>,
    z0: &DVector<f64>,
    system: &LinearSystem,
    set: &ControlSet,
) -> f64 {
    let drift = -(&system.a * z0).dot(p);
    let q = -(system.q.transpose() * (system.b.transpose() * p));
    drift + set.support(&q)
}

/// One outer evaluation of the minimum-time search.
#[derive(Debug, Clone, Copy)]
pub struct OuterStep {
    pub t: f64,
    pub phi: f64,
    /// True when the point came from a Newton update, false for bisection.
    pub newton: bool,
}

/// Tunables of the outer search.
#[derive(Debug, Clone, Copy)]
pub struct MinTimeOptions {
    /// Stop when `|phi| <= value_tol`.
    pub value_tol: f64,
    /// Stop when the bracket width drops to `time_tol`.
    pub time_tol: f64,
    /// Newton is rejected when the Hamiltonian denominator is below this.
    pub h_min: f64,
    pub max_outer: usize,
}

impl Default for MinTimeOptions {
    fn default() -> Self {
        Self {
            value_tol: 1e-4,
            time_tol: 1e-6,
            h_min: 1e-8,
            max_outer: 100,
        }
    }
}

/// Minimum-time result with the solve at `T*` and the outer-iteration trace.
#[derive(Debug, Clone)]
pub struct MinTimeResult {
    pub t_star: f64,
    pub solution: HopfSolution,
    pub newton_steps: usize,
    pub bisection_steps: usize,
    pub bracket_final: (f64, f64),
    pub trace: Vec<OuterStep>,
}

/// Find the smallest horizon in `[t_lo, t_hi]` with `phi(x0, T) = 0`.
///
/// Requires a sign change across the bracket: `phi(x0, t_lo) > 0` (outside
/// the backward reachable set) and `phi(x0, t_hi) < 0`. A nonpositive value
/// already at `t_lo` reports `T* = t_lo` immediately; with `t_lo = 0` that
/// is the "already inside the target" case. Each value evaluation warm
/// starts from the previous minimizer.
pub fn min_time(
    x0: &DVector<f64>,
    t_lo: f64,
    t_hi: f64,
    problem: &HopfProblem,
    config: &SolverConfig,
    options: &MinTimeOptions,
) -> Result<MinTimeResult> {
    assert!(t_lo >= 0.0 && t_hi > t_lo, "bracket must satisfy 0 <= t_lo < t_hi");

    let sol_lo = solve_hopf(x0, t_lo, problem, config, None)?;
    let phi_lo = sol_lo.value;
    let mut trace = vec![OuterStep {
        t: t_lo,
        phi: phi_lo,
        newton: false,
    }];

    if phi_lo <= options.value_tol {
        // Already at or inside the target at the lower end.
        return Ok(MinTimeResult {
            t_star: t_lo,
            solution: sol_lo,
            newton_steps: 0,
            bisection_steps: 0,
            bracket_final: (t_lo, t_lo),
            trace,
        });
    }

    let sol_hi = solve_hopf(x0, t_hi, problem, config, Some(&sol_lo.minimizer))?;
    let phi_hi = sol_hi.value;
    trace.push(OuterStep {
        t: t_hi,
        phi: phi_hi,
        newton: false,
    });

    if phi_hi.abs() <= options.value_tol {
        return Ok(MinTimeResult {
            t_star: t_hi,
            solution: sol_hi,
            newton_steps: 0,
            bisection_steps: 0,
            bracket_final: (t_lo, t_hi),
            trace,
        });
    }
    if phi_hi > 0.0 {
        return Err(HopfError::NoSignChange { phi_lo, phi_hi });
    }

    let mut lo = t_lo;
    let mut hi = t_hi;
    // Current iterate: the bracket end closer to the root.
    let (mut t, mut sol) = if phi_lo.abs() <= phi_hi.abs() {
        (t_lo, sol_lo)
    } else {
        (t_hi, sol_hi)
    };

    let mut newton_steps = 0;
    let mut bisection_steps = 0;

    for _ in 0..options.max_outer {
        let h = hamiltonian_x(&sol.minimizer, x0, &problem.system, &problem.control_set);
        let newton_t = t + sol.value / h;
        let take_newton = h > options.h_min && newton_t > lo && newton_t < hi;
        let t_next = if take_newton {
            newton_steps += 1;
            newton_t
        } else {
            bisection_steps += 1;
            0.5 * (lo + hi)
        };

        let sol_next = solve_hopf(x0, t_next, problem, config, Some(&sol.minimizer))?;
        trace.push(OuterStep {
            t: t_next,
            phi: sol_next.value,
            newton: take_newton,
        });

        if sol_next.value > 0.0 {
            lo = t_next;
        } else {
            hi = t_next;
        }
        t = t_next;
        sol = sol_next;

        if sol.value.abs() <= options.value_tol || (hi - lo) <= options.time_tol {
            return Ok(MinTimeResult {
                t_star: t,
                solution: sol,
                newton_steps,
                bisection_steps,
                bracket_final: (lo, hi),
                trace,
            });
        }
    }

    Err(HopfError::MaxOuterIter(options.max_outer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn hamiltonian_zero_costate_vanishes() {
        let problem = scenarios::double_integrator(0.2);
        let h = hamiltonian_x(
            &DVector::zeros(2),
            &vec2(1.0, 0.0),
            &problem.system,
            &problem.control_set,
        );
        assert_eq!(h, 0.0);
    }

    #[test]
    fn hamiltonian_driftless_reduces_to_support() {
        let mut problem = scenarios::double_integrator(0.2);
        problem.system.a = nalgebra::DMatrix::zeros(2, 2);
        let p = vec2(0.7, -1.3);
        let h = hamiltonian_x(&p, &vec2(5.0, 5.0), &problem.system, &problem.control_set);
        // B^T p = p_2, support of the unit interval is |.|.
        assert!((h - 1.3).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_double_integrator_hand_value() {
        let problem = scenarios::double_integrator(0.2);
        // z0 = (1, 0): A z0 = (0, 0); p = (0, 1): -Q^T B^T p = -1, |.| = 1.
        let h = hamiltonian_x(&vec2(0.0, 1.0), &vec2(1.0, 0.0), &problem.system, &problem.control_set);
        assert!((h - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inside_target_reports_zero_time() {
        let problem = scenarios::double_integrator(0.2);
        let result = min_time(
            &vec2(0.05, 0.0),
            0.0,
            5.0,
            &problem,
            &scenarios::di_solver_config(),
            &MinTimeOptions::default(),
        )
        .unwrap();
        assert_eq!(result.t_star, 0.0);
        assert!(result.solution.value < 0.0);
    }

    #[test]
    fn unreachable_horizon_is_no_sign_change() {
        let problem = scenarios::double_integrator(0.2);
        let err = min_time(
            &vec2(4.0, 0.0),
            0.0,
            0.2,
            &problem,
            &scenarios::di_solver_config(),
            &MinTimeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, HopfError::NoSignChange { .. }));
    }

    #[test]
    fn symmetric_starts_agree() {
        // The double integrator with symmetric box control and a centered
        // circular target is invariant under x -> -x.
        let problem = scenarios::double_integrator(0.2);
        let config = scenarios::di_solver_config();
        let opts = MinTimeOptions::default();
        let plus = min_time(&vec2(1.0, 0.0), 0.0, 5.0, &problem, &config, &opts).unwrap();
        let minus = min_time(&vec2(-1.0, 0.0), 0.0, 5.0, &problem, &config, &opts).unwrap();
        assert!((plus.t_star - minus.t_star).abs() < 1e-3);
    }

    #[test]
    fn value_at_t_star_is_small_and_bracket_is_preserved() {
        let problem = scenarios::double_integrator(0.2);
        let result = min_time(
            &vec2(1.0, 0.0),
            0.0,
            5.0,
            &problem,
            &scenarios::di_solver_config(),
            &MinTimeOptions::default(),
        )
        .unwrap();
        assert!(result.solution.value.abs() <= 1e-4);
        let (lo, hi) = result.bracket_final;
        assert!(lo <= result.t_star && result.t_star <= hi);

        // Bracket preservation: every positive-phi sample sits left of
        // every negative-phi sample.
        let max_pos = result
            .trace
            .iter()
            .filter(|s| s.phi > 0.0)
            .map(|s| s.t)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_neg = result
            .trace
            .iter()
            .filter(|s| s.phi < 0.0)
            .map(|s| s.t)
            .fold(f64::INFINITY, f64::min);
        assert!(max_pos < min_neg);
    }
}
