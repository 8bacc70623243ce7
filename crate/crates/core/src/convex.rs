//! Convex primitives: support functions, Euclidean projections, and the two
//! proximal operators of the primal-dual iteration.
//!
//! The dual blocks use the conjugate of the weighted dual norm, which is the
//! indicator of the weight-scaled control set; its prox is a projection and
//! does not depend on the dual step size. The primal side is the quadratic
//! `G(p) = 1/4 <p, M p> + c - <z0, p>`, whose prox is one SPD solve with
//! `(I + tau/2 M)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{HopfError, Result};
use crate::matexp::expm;
use crate::problem::{ControlSet, LinearSystem, QuadraticTarget};

impl ControlSet {
    /// Support function `sup { <q, c> : c in set }`.
    ///
    /// L1 norm for the unit box, L2 norm for the unit ball.
    pub fn support(&self, q: &DVector<f64>) -> f64 {
        debug_assert_eq!(q.len(), self.dim());
        match self {
            ControlSet::UnitBox { .. } => q.iter().map(|v| v.abs()).sum(),
            ControlSet::UnitBall { .. } => q.norm(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            ControlSet::UnitBox { .. } => y.map(|v| v.clamp(-1.0, 1.0)),
            ControlSet::UnitBall { .. } => {
                let n = y.norm();
                if n <= 1.0 {
                    y.clone()
                } else {
                    y / n
                }
            }
        }
    }

    /// A maximizer of `<q, c>` over the set.
    ///
    /// Box: componentwise sign with `sign(0) = +1`. Ball: `q/||q||`, falling
    /// back to the first basis vector at `q = 0`. The tie-breaks make the
    /// selection deterministic where the support function is nonsmooth.
    pub fn support_point(&self, q: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(q.len(), self.dim());
        match self {
            ControlSet::UnitBox { .. } => q.map(|v| if v >= 0.0 { 1.0 } else { -1.0 }),
            ControlSet::UnitBall { dim } => {
                let n = q.norm();
                if n == 0.0 {
                    let mut e = DVector::zeros(*dim);
                    e[0] = 1.0;
                    e
                } else {
                    q / n
                }
            }
        }
    }
}

/// Prox of the per-block conjugate term: projection of `y_i` onto the set
/// scaled by the quadrature weight.
pub fn prox_f_star_block(y_i: &DVector<f64>, weight: f64, set: &ControlSet) -> DVector<f64> {
    debug_assert!(weight > 0.0);
    set.project(&(y_i / weight)) * weight
}

/// In-place projection of one dual block onto the weight-scaled set; the
/// allocation-free form of [`prox_f_star_block`] used inside the iteration.
pub(crate) fn project_scaled_in_place(set: &ControlSet, weight: f64, y: &mut [f64]) {
    match set {
        ControlSet::UnitBox { .. } => {
            for v in y.iter_mut() {
                *v = v.clamp(-weight, weight);
            }
        }
        ControlSet::UnitBall { .. } => {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > weight {
                let scale = weight / norm;
                for v in y.iter_mut() {
                    *v *= scale;
                }
            }
        }
    }
}

/// Quadratic part of the Hopf objective at one `(z0, T)`:
/// `G(p) = 1/4 <p, M p> + constant - <z0, p>` with `M = e^{-TA} W e^{-TA^T}`.
#[derive(Debug, Clone)]
pub struct QuadraticConjugate {
    pub m: DMatrix<f64>,
    pub constant: f64,
    pub z0: DVector<f64>,
}

impl QuadraticConjugate {
    pub fn new(m: DMatrix<f64>, constant: f64, z0: DVector<f64>) -> Self {
        Self { m, constant, z0 }
    }

    /// Build `M = e^{-TA} W e^{-TA^T}` for a horizon; this is the conjugate
    /// shape matrix expressed without inverting `W`.
    pub fn for_horizon(
        system: &LinearSystem,
        target: &QuadraticTarget,
        horizon: f64,
        z0: DVector<f64>,
    ) -> Result<Self> {
        let e = expm(&system.a, -horizon)?;
        let mut m = &e * &target.w * e.transpose();
        // Symmetrize away round-off before factorization.
        m = (&m + m.transpose()) * 0.5;
        Ok(Self::new(m, target.level, z0))
    }

    /// Conjugate terminal cost `J*(p) = 1/4 <p, M p> + constant`.
    pub fn jstar(&self, p: &DVector<f64>) -> f64 {
        0.25 * p.dot(&(&self.m * p)) + self.constant
    }

    /// Full quadratic objective part `J*(p) - <z0, p>`.
    pub fn g_value(&self, p: &DVector<f64>) -> f64 {
        self.jstar(p) - self.z0.dot(p)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Cached factorization of `(I + tau/2 M)` for repeated prox evaluations
/// within one solve.
#[derive(Debug, Clone)]
pub struct GProx {
    chol: Cholesky<f64, Dyn>,
    tau_z0: DVector<f64>,
}

impl GProx {
    pub fn new(conj: &QuadraticConjugate, tau: f64) -> Result<Self> {
        assert!(tau >= 0.0, "prox step must be nonnegative");
        let n = conj.dim();
        let system = DMatrix::identity(n, n) + &conj.m * (0.5 * tau);
        let chol = Cholesky::new(system).ok_or(HopfError::FactorizationFailed)?;
        Ok(Self {
            chol,
            tau_z0: &conj.z0 * tau,
        })
    }

    /// `argmin_w tau G(w) + 1/2 ||w - p||^2 = (I + tau/2 M)^-1 (p + tau z0)`.
    pub fn prox(&self, p: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(p + &self.tau_z0))
    }

    /// In-place prox: `v` holds the pre-prox point on entry and the prox on
    /// exit.
    pub fn prox_mut(&self, v: &mut DVector<f64>) {
        *v += &self.tau_z0;
        self.chol.solve_mut(v);
    }
}

/// One-off prox of the quadratic objective part.
pub fn prox_g(conj: &QuadraticConjugate, p: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    Ok(GProx::new(conj, tau)?.prox(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn support_box_is_l1() {
        let set = ControlSet::UnitBox { dim: 2 };
        assert_eq!(set.support(&vec2(1.0, -2.0)), 3.0);
        assert_eq!(set.support(&vec2(0.0, 0.0)), 0.0);
    }

    #[test]
    fn support_ball_is_l2() {
        let set = ControlSet::UnitBall { dim: 2 };
        assert_eq!(set.support(&vec2(3.0, 4.0)), 5.0);
        assert_eq!(set.support(&vec2(0.0, 0.0)), 0.0);
    }

    #[test]
    fn project_box_clamps() {
        let set = ControlSet::UnitBox { dim: 2 };
        assert_eq!(set.project(&vec2(2.0, -0.5)), vec2(1.0, -0.5));
        let inside = vec2(0.4, -0.9);
        assert_eq!(set.project(&inside), inside);
    }

    #[test]
    fn project_ball_rescales() {
        let set = ControlSet::UnitBall { dim: 2 };
        let p = set.project(&vec2(3.0, 4.0));
        assert!((p - vec2(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn support_point_attains_support() {
        for set in [ControlSet::UnitBox { dim: 2 }, ControlSet::UnitBall { dim: 2 }] {
            for q in [vec2(1.3, -0.2), vec2(0.0, 0.0), vec2(-2.0, 5.0)] {
                let c = set.support_point(&q);
                // The chosen point is feasible and attains the supremum.
                assert!((set.project(&c) - &c).norm() < 1e-12);
                assert!((q.dot(&c) - set.support(&q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn support_point_zero_tiebreak() {
        let set = ControlSet::UnitBox { dim: 3 };
        let c = set.support_point(&DVector::zeros(3));
        assert_eq!(c, DVector::from_element(3, 1.0));

        let ball = ControlSet::UnitBall { dim: 3 };
        let c = ball.support_point(&DVector::zeros(3));
        assert_eq!(c, DVector::from_column_slice(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn block_prox_matches_clamp_formula() {
        let set = ControlSet::UnitBox { dim: 1 };
        let dt = 0.1;
        let cases = [(0.25, 0.1), (0.05, 0.05), (-0.3, -0.1)];
        for (y, expected) in cases {
            let out = prox_f_star_block(&DVector::from_column_slice(&[y]), dt, &set);
            assert!((out[0] - expected).abs() < 1e-15, "y={y}");
        }
    }

    #[test]
    fn prox_g_zero_step_is_identity() {
        let conj = QuadraticConjugate::new(DMatrix::identity(2, 2), 1.0, vec2(0.3, 0.3));
        let p = vec2(1.0, -2.0);
        assert_eq!(prox_g(&conj, &p, 0.0).unwrap(), p);
    }

    #[test]
    fn prox_g_isotropic_case() {
        // M = 2I, tau = 1, z0 = 0: (I + I)^-1 p = p/2.
        let conj = QuadraticConjugate::new(DMatrix::identity(2, 2) * 2.0, 0.0, vec2(0.0, 0.0));
        let out = prox_g(&conj, &vec2(2.0, 2.0), 1.0).unwrap();
        assert!((out - vec2(1.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn prox_g_matches_kkt_oracle() {
        // Independent check: solve the stationarity system
        // (tau/2 M + I) w = p + tau z0 with a dense LU built from scratch.
        let m = {
            let a = DMatrix::from_row_slice(
                4,
                4,
                &[
                    2.0, 0.3, 0.1, 0.0, //
                    0.3, 1.5, 0.2, 0.1, //
                    0.1, 0.2, 1.1, 0.4, //
                    0.0, 0.1, 0.4, 2.2,
                ],
            );
            a
        };
        let z0 = DVector::from_column_slice(&[0.5, -1.0, 0.2, 0.8]);
        let p = DVector::from_column_slice(&[1.0, 2.0, -0.5, 0.3]);
        let tau = 0.7;
        let conj = QuadraticConjugate::new(m.clone(), 1.0, z0.clone());

        let out = prox_g(&conj, &p, tau).unwrap();
        let lhs = &m * (0.5 * tau) + DMatrix::identity(4, 4);
        let oracle = lhs.lu().solve(&(&p + &z0 * tau)).unwrap();
        assert!((&out - &oracle).norm() < 1e-12);

        // Prox optimality: tau * grad G(w) + (w - p) = 0.
        let grad_g = &m * &out * 0.5 - &z0;
        let residual = grad_g * tau + &out - &p;
        assert!(residual.norm() <= 1e-8 * (1.0 + p.norm()));
    }

    #[test]
    fn prox_g_rejects_indefinite_m() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -50.0]);
        let conj = QuadraticConjugate::new(m, 0.0, vec2(0.0, 0.0));
        assert!(matches!(
            prox_g(&conj, &vec2(1.0, 1.0), 10.0),
            Err(HopfError::FactorizationFailed)
        ));
    }
}
