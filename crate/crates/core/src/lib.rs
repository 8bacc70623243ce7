//! Grid-free solver for time-optimal control of linear systems.
//!
//! The value function of a Hamilton-Jacobi equation is evaluated point-wise
//! through the generalized Hopf formula: each query becomes a small
//! unconstrained convex program solved by primal-dual proximal splitting.
//! No state-space grid is ever built, so the cost scales polynomially with
//! dimension, and independent queries parallelize trivially.
//!
//! The crate covers the full pipeline:
//!
//! - [`problem`]: dynamics, control sets, ellipsoidal targets, validation;
//! - [`matexp`]: dense matrix exponentials and the time-sampled operator
//!   stack;
//! - [`convex`]: support functions, projections, and the two proximal
//!   operators;
//! - [`solver`]: the primal-dual iteration with residual-based stopping;
//! - [`time_optimal`]: hybrid Newton-bisection search for the minimum time;
//! - [`trajectory`]: direct reconstruction of optimal states and controls
//!   from the Hopf minimizer;
//! - [`unscented`]: sigma-point augmentation for robustness to uncertain
//!   initial states;
//! - [`grid`]: parallel sweeps over state-space grids and zero level-set
//!   contours;
//! - [`scenarios`]: ready-made example problems.

pub mod convex;
pub mod error;
pub mod grid;
pub mod matexp;
pub mod problem;
pub mod scenarios;
pub mod solver;
pub mod time_optimal;
pub mod trajectory;
pub mod unscented;

pub use convex::{prox_f_star_block, prox_g, GProx, QuadraticConjugate};
pub use error::{HopfError, Result, ValidationReport};
pub use grid::{solve_grid, zero_contour, GridSpec, ValueField};
pub use matexp::{assemble_stack, expm, expm_action, StackedOperator};
pub use problem::{
    validate, ControlSet, HopfProblem, LinearSystem, QuadraticTarget, QuadratureRule, SigmaRule,
    SolverConfig, TargetCost,
};
pub use solver::{objective, prepare, solve_hopf, HopfSolution, Prepared};
pub use time_optimal::{hamiltonian_x, min_time, MinTimeOptions, MinTimeResult};
pub use trajectory::{grad_h, grad_j_star, reconstruct, simulate_control, Trajectory};
pub use unscented::{augment, mse_target, sigma_points, SigmaSet};
