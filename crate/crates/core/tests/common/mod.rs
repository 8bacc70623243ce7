//! Shared independent oracles for the integration suites.
//!
//! Everything here is deliberately written from scratch (series matrix
//! exponential, hand-rolled quadrature, brute-force minimization, bang-bang
//! forward simulation) so it shares no code path with the implementation it
//! checks.

#![allow(dead_code)]

use hopf_core::problem::HopfProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vec2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_column_slice(&[a, b])
}

/// Matrix exponential by scaled Taylor series plus repeated squaring.
pub fn expm_series(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a * t;
    let one_norm = |m: &DMatrix<f64>| -> f64 {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut k = 0;
    while one_norm(&(&at / 2f64.powi(k))) > 0.25 {
        k += 1;
    }
    let scaled = &at / 2f64.powi(k);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for j in 1..=200 {
        term = &term * &scaled / j as f64;
        sum += &term;
    }
    let mut result = sum;
    for _ in 0..k {
        result = &result * &result;
    }
    result
}

/// Independent evaluation of the discretized Hopf objective for box
/// control: quadratic conjugate plus left-Riemann dual-norm quadrature.
pub struct ObjectiveOracle {
    m: DMatrix<f64>,
    level: f64,
    blocks: Vec<DMatrix<f64>>,
    dt: f64,
}

impl ObjectiveOracle {
    pub fn build(problem: &HopfProblem, horizon: f64) -> Self {
        let n_q = problem.quadrature_n;
        let dt = horizon / n_q as f64;
        let e = expm_series(&problem.system.a, -horizon);
        let m = &e * &problem.target.w * e.transpose();
        let bq = &problem.system.b * &problem.system.q;
        let blocks: Vec<DMatrix<f64>> = (0..n_q)
            .map(|i| {
                let ti = i as f64 * dt;
                (-(expm_series(&problem.system.a, -(horizon - ti)) * &bq)).transpose()
            })
            .collect();
        Self {
            m,
            level: problem.target.level,
            blocks,
            dt,
        }
    }

    pub fn objective(&self, p: &DVector<f64>, z0: &DVector<f64>) -> f64 {
        let mut obj = 0.25 * p.dot(&(&self.m * p)) + self.level - z0.dot(p);
        for k in &self.blocks {
            let kp = k * p;
            obj += self.dt * kp.iter().map(|v| v.abs()).sum::<f64>();
        }
        obj
    }

    /// Brute-force minimization: coarse 401x401 grid on [-20, 20]^2, then
    /// coordinate descent with halving steps down to 1e-6. Returns the
    /// value function (negated minimum) and the minimizer.
    pub fn brute_force_value(&self, z0: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut best_v = f64::INFINITY;
        let mut best_p = DVector::zeros(2);
        for i in 0..=400 {
            for j in 0..=400 {
                let p = vec2(-20.0 + 0.1 * i as f64, -20.0 + 0.1 * j as f64);
                let v = self.objective(&p, z0);
                if v < best_v {
                    best_v = v;
                    best_p = p;
                }
            }
        }
        let mut h = 0.1;
        while h > 1e-6 {
            let mut improved = false;
            for axis in 0..2 {
                loop {
                    let mut cand = best_p.clone();
                    cand[axis] += h;
                    let v = self.objective(&cand, z0);
                    if v < best_v {
                        best_p = cand;
                        best_v = v;
                        improved = true;
                        continue;
                    }
                    let mut cand = best_p.clone();
                    cand[axis] -= h;
                    let v = self.objective(&cand, z0);
                    if v < best_v {
                        best_p = cand;
                        best_v = v;
                        improved = true;
                        continue;
                    }
                    break;
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        (-best_v, best_p)
    }
}

/// RK4 on the double integrator with piecewise-constant control.
fn di_rk4(x0: &DVector<f64>, u: f64, duration: f64, steps: usize) -> DVector<f64> {
    let f = |s: &DVector<f64>| vec2(s[1], u);
    let h = duration / steps as f64;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Ground-truth minimum time for the double integrator from `(1, 0)` to the
/// centered ball of the given radius. Each feasibility check asks whether
/// the one-switch bang-bang control `u = -1` then `u = +1` can arrive in
/// the ball at exactly the probed horizon, forward-simulating a dense grid
/// of switch times with RK4. Exact-time arrival is only feasible in a
/// window around the optimum, so a coarse upward scan brackets the first
/// feasible horizon before bisecting to the least one.
pub fn bang_bang_min_time(radius: f64, t_max: f64) -> f64 {
    let x0 = vec2(1.0, 0.0);
    let switch_grid = 200;
    let rk4_steps = 10_000;
    let feasible = |horizon: f64| -> bool {
        for k in 0..=switch_grid {
            let s = horizon * k as f64 / switch_grid as f64;
            let steps1 = ((rk4_steps as f64) * s / horizon).ceil().max(1.0) as usize;
            let steps2 = (rk4_steps - steps1.min(rk4_steps)).max(1);
            let mid = di_rk4(&x0, -1.0, s, steps1);
            let end = di_rk4(&mid, 1.0, horizon - s, steps2);
            if end.norm() <= radius {
                return true;
            }
        }
        false
    };

    let coarse = 0.1;
    let mut hi = coarse;
    while !feasible(hi) {
        hi += coarse;
        assert!(hi <= t_max, "target not reachable within t_max");
    }
    let mut lo = hi - coarse;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random 2-D instance for the oracle-equivalence sweep: stable/unstable
/// drift with norm at most 2, random input column, random SPD target shape.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (HopfProblem, DVector<f64>, f64) {
    use hopf_core::problem::{ControlSet, LinearSystem, QuadraticTarget};
    let mut a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let na = a.norm();
    if na > 2.0 {
        a *= 2.0 / na;
    }
    let b = DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.5..1.5));
    let g = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let w = &g * g.transpose() + DMatrix::identity(2, 2) * 0.5;
    let problem = HopfProblem::new(
        LinearSystem::new(a, b, DMatrix::identity(1, 1)),
        ControlSet::UnitBox { dim: 1 },
        QuadraticTarget::new(w, 1.0),
    );
    let z0 = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let t = rng.gen_range(0.3..1.2);
    (problem, z0, t)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bilinear interpolation of a 2-D value field.
pub fn bilinear(field: &hopf_core::ValueField, p: [f64; 2]) -> f64 {
    let s = &field.spec;
    let (lo0, _) = s.bounds[0];
    let (lo1, _) = s.bounds[1];
    let f0 = ((p[0] - lo0) / s.spacing(0)).clamp(0.0, (s.resolution[0] - 2) as f64);
    let f1 = ((p[1] - lo1) / s.spacing(1)).clamp(0.0, (s.resolution[1] - 2) as f64);
    let (i, j) = (f0.floor() as usize, f1.floor() as usize);
    let (a, b) = (f0 - i as f64, f1 - j as f64);
    let v = |i: usize, j: usize| field.values[i * s.resolution[1] + j];
    v(i, j) * (1.0 - a) * (1.0 - b)
        + v(i + 1, j) * a * (1.0 - b)
        + v(i, j + 1) * (1.0 - a) * b
        + v(i + 1, j + 1) * a * b
}

/// Check that the zero set of `inner` sits inside the zero set of `outer`,
/// up to one grid cell: every vertex of the inner contour must either have
/// nonpositive interpolated outer value or lie within one cell diagonal of
/// the outer contour.
pub fn contours_nested(inner: &hopf_core::ValueField, outer: &hopf_core::ValueField) -> bool {
    let spec = &inner.spec;
    let cell = (spec.spacing(0).powi(2) + spec.spacing(1).powi(2)).sqrt();
    let ci = hopf_core::zero_contour(inner).expect("2-D field");
    let co = hopf_core::zero_contour(outer).expect("2-D field");
    for line in &ci {
        for v in line {
            if bilinear(outer, *v) <= 0.0 {
                continue;
            }
            let dist = co
                .iter()
                .flat_map(|l| l.iter())
                .map(|q| ((q[0] - v[0]).powi(2) + (q[1] - v[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if dist > cell {
                return false;
            }
        }
    }
    true
}

/// Degree-2 least-squares fit `y ~ c2 x^2 + c1 x + c0`.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() >= 3 && xs.len() == ys.len());
    let n = xs.len();
    let mut design = DMatrix::zeros(n, 3);
    for (i, &x) in xs.iter().enumerate() {
        design[(i, 0)] = x * x;
        design[(i, 1)] = x;
        design[(i, 2)] = 1.0;
    }
    let rhs = DVector::from_column_slice(ys);
    let normal = design.transpose() * &design;
    let coeffs = normal
        .lu()
        .solve(&(design.transpose() * rhs))
        .expect("normal equations are nonsingular for distinct abscissae");
    (coeffs[0], coeffs[1], coeffs[2])
}
