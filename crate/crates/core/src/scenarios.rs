//! Ready-made problem instances used by the CLI defaults, benchmarks, and
//! tests.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::problem::{ControlSet, HopfProblem, LinearSystem, QuadraticTarget, SolverConfig};
use crate::unscented;

/// Double integrator (position/velocity) with `|u| <= 1` and a circular
/// target of the given radius around the origin.
pub fn double_integrator(radius: f64) -> HopfProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(1, 1);
    HopfProblem::new(
        LinearSystem::new(a, b, q),
        ControlSet::UnitBox { dim: 1 },
        QuadraticTarget::ball(2, radius),
    )
}

/// Solver settings that work well for the double integrator.
pub fn di_solver_config() -> SolverConfig {
    SolverConfig::default().with_tau(10.0)
}

/// Dimensional-scaling instance: `k` iid Gaussian copies of the double
/// integrator sharing one control, with the trace-penalty target
/// `W = k I` per block. Returns the problem and the stacked initial state.
///
/// The sample cloud is drawn around `(1, 0)` with standard deviation
/// `0.0667` per axis, matching the robust-control scenario scale.
pub fn scaling_problem(samples: usize, seed: u64) -> (HopfProblem, DVector<f64>) {
    assert!(samples >= 1);
    let base = double_integrator(0.2);
    let system = unscented::augment(&base.system, samples);

    let weights = vec![1.0 / samples as f64; samples];
    let goal = DVector::zeros(2);
    let target = unscented::mse_target(&weights, &goal, 0.04)
        .expect("equal positive weights always form a valid target");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.0667).unwrap();
    let mut x0 = DVector::zeros(2 * samples);
    for i in 0..samples {
        x0[2 * i] = 1.0 + normal.sample(&mut rng);
        x0[2 * i + 1] = normal.sample(&mut rng);
    }

    let problem = HopfProblem::new(system, ControlSet::UnitBox { dim: 1 }, target);
    (problem, x0)
}
