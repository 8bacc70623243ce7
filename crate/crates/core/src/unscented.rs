//! Unscented-transform sample generation and system augmentation for
//! control that is robust to Gaussian initial-state uncertainty.
//!
//! A symmetric sigma-point set stands in for the initial distribution; the
//! dynamics are copied once per point, all copies share the single control
//! input, and a block-diagonal quadratic target turns the weighted
//! mean-square terminal error into an ordinary ellipsoid constraint on the
//! stacked state.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{HopfError, Result};
use crate::problem::{LinearSystem, QuadraticTarget};

/// Scaled sigma-point parameters. `kappa = 1` keeps every mean weight
/// strictly positive (with `kappa = 0` the center weight degenerates to
/// zero, which the mean-square-error target cannot represent).
pub const UT_ALPHA: f64 = 1.0;
pub const UT_BETA: f64 = 2.0;
pub const UT_KAPPA: f64 = 1.0;

/// Deterministic sample set matching a Gaussian's first two moments.
#[derive(Debug, Clone)]
pub struct SigmaSet {
    /// `2n + 1` points; the first is the mean.
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub covariance_weights: Vec<f64>,
    pub source_mean: DVector<f64>,
    pub source_cov: DMatrix<f64>,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Concatenate the points into one stacked state vector.
    pub fn stacked(&self) -> DVector<f64> {
        stack_states(&self.points)
    }

    /// Weighted sample mean.
    pub fn reconstructed_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.source_mean.len());
        for (w, x) in self.mean_weights.iter().zip(&self.points) {
            mean += x * *w;
        }
        mean
    }

    /// Weighted sample covariance using the covariance weight set.
    pub fn reconstructed_cov(&self) -> DMatrix<f64> {
        let n = self.source_mean.len();
        let mean = self.reconstructed_mean();
        let mut cov = DMatrix::zeros(n, n);
        for (w, x) in self.covariance_weights.iter().zip(&self.points) {
            let d = x - &mean;
            cov += &d * d.transpose() * *w;
        }
        cov
    }
}

/// Concatenate state vectors into one tall vector.
pub fn stack_states(points: &[DVector<f64>]) -> DVector<f64> {
    let n = points.first().map_or(0, |p| p.len());
    let mut out = DVector::zeros(n * points.len());
    for (i, p) in points.iter().enumerate() {
        out.rows_mut(i * n, n).copy_from(p);
    }
    out
}

/// Build the symmetric sigma-point set for `N(mu, cov)`.
///
/// Points are `mu` and `mu +- column_i(sqrt((n + lambda) cov))` with the
/// symmetric (eigendecomposition) matrix square root, so the construction
/// is basis-independent.
pub fn sigma_points(mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<SigmaSet> {
    let n = mu.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(HopfError::DimensionMismatch(format!(
            "covariance must be {n}x{n}, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let lambda = UT_ALPHA * UT_ALPHA * (n as f64 + UT_KAPPA) - n as f64;

    let eig = SymmetricEigen::new(sym.clone() * (n as f64 + lambda));
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(HopfError::NotPositiveDefinite(
            "sigma-point covariance".into(),
        ));
    }
    let sqrt_eig = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * sqrt_eig * eig.eigenvectors.transpose();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mu.clone());
    for i in 0..n {
        let col = root.column(i).into_owned();
        points.push(mu + &col);
        points.push(mu - &col);
    }

    let w0_mean = lambda / (n as f64 + lambda);
    let w0_cov = w0_mean + 1.0 - UT_ALPHA * UT_ALPHA + UT_BETA;
    let wi = 1.0 / (2.0 * (n as f64 + lambda));
    let mut mean_weights = vec![wi; 2 * n + 1];
    let mut covariance_weights = vec![wi; 2 * n + 1];
    mean_weights[0] = w0_mean;
    covariance_weights[0] = w0_cov;

    Ok(SigmaSet {
        points,
        mean_weights,
        covariance_weights,
        source_mean: mu.clone(),
        source_cov: sym,
    })
}

/// Copy the dynamics `k` times: block-diagonal drift, vertically stacked
/// input map, unchanged control scaling. All copies share the one control.
pub fn augment(system: &LinearSystem, k: usize) -> LinearSystem {
    assert!(k >= 1, "augmentation needs at least one copy");
    let n = system.state_dim();
    let m = system.control_dim();
    let mut a = DMatrix::zeros(n * k, n * k);
    let mut b = DMatrix::zeros(n * k, m);
    for i in 0..k {
        a.view_mut((i * n, i * n), (n, n)).copy_from(&system.a);
        b.view_mut((i * n, 0), (n, m)).copy_from(&system.b);
    }
    LinearSystem::new(a, b, system.q.clone())
}

/// Block-diagonal quadratic target encoding the weighted mean-square error
/// bound `sum_i w_i ||x_i(T) - goal||^2 <= level` on the stacked state.
///
/// Each block of `W` is `w_i^-1 I`, so `<x, W^-1 x>` reproduces the
/// weighted sum exactly. Only the origin goal is supported.
pub fn mse_target(weights: &[f64], goal: &DVector<f64>, level: f64) -> Result<QuadraticTarget> {
    if goal.iter().any(|&g| g != 0.0) {
        return Err(HopfError::NonOriginGoal);
    }
    if !(level > 0.0) {
        return Err(HopfError::InvalidConfig(format!(
            "mse level must be positive, got {level}"
        )));
    }
    let n = goal.len();
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight > 0.0) {
            return Err(HopfError::NonPositiveWeight { index, weight });
        }
    }
    let k = weights.len();
    let mut w = DMatrix::zeros(n * k, n * k);
    for (i, &wi) in weights.iter().enumerate() {
        for d in 0..n {
            w[(i * n + d, i * n + d)] = 1.0 / wi;
        }
    }
    Ok(QuadraticTarget::new(w, level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matexp::expm;
    use crate::scenarios;

    #[test]
    fn sigma_points_univariate_symmetry() {
        let mu = DVector::from_column_slice(&[0.0]);
        let cov = DMatrix::from_element(1, 1, 1.0);
        let set = sigma_points(&mu, &cov).unwrap();
        assert_eq!(set.len(), 3);
        let lambda = UT_ALPHA * UT_ALPHA * (1.0 + UT_KAPPA) - 1.0;
        let spread = (1.0 + lambda).sqrt();
        assert_eq!(set.points[0][0], 0.0);
        assert!((set.points[1][0] - spread).abs() < 1e-12);
        assert!((set.points[2][0] + spread).abs() < 1e-12);
        assert!(set.reconstructed_mean().norm() < 1e-14);
    }

    #[test]
    fn sigma_points_match_moments() {
        let mu = DVector::from_column_slice(&[1.0, -2.0]);
        let pi = 0.0667;
        let cov = DMatrix::identity(2, 2) * pi * pi;
        let set = sigma_points(&mu, &cov).unwrap();

        assert!((set.reconstructed_mean() - &mu).norm() < 1e-12);
        assert!((set.reconstructed_cov() - &cov).norm() < 1e-10);
        let total: f64 = set.mean_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(set.mean_weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sigma_points_correlated_covariance() {
        let mu = DVector::from_column_slice(&[0.5, 0.0, -1.0]);
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.1, 0.0, 0.1, 0.4, -0.05, 0.0, -0.05, 0.3],
        );
        let set = sigma_points(&mu, &cov).unwrap();
        assert!((set.reconstructed_mean() - &mu).norm() < 1e-12);
        assert!((set.reconstructed_cov() - &cov).norm() < 1e-10);
    }

    #[test]
    fn sigma_points_reject_indefinite_cov() {
        let mu = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(
            sigma_points(&mu, &cov),
            Err(HopfError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn augment_single_copy_is_identity() {
        let base = scenarios::double_integrator(0.2);
        let aug = augment(&base.system, 1);
        assert_eq!(aug, base.system);
    }

    #[test]
    fn augment_three_copies_block_structure() {
        let base = scenarios::double_integrator(0.2);
        let aug = augment(&base.system, 3);
        assert_eq!(aug.a.shape(), (6, 6));
        assert_eq!(aug.b.shape(), (6, 1));
        for i in 0..3 {
            assert_eq!(aug.a.view((2 * i, 2 * i), (2, 2)).clone_owned(), base.system.a);
            assert_eq!(aug.b.view((2 * i, 0), (2, 1)).clone_owned(), base.system.b);
        }
        // Off-diagonal blocks vanish.
        assert_eq!(aug.a.view((0, 2), (2, 2)).clone_owned(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn augmented_exponential_is_blockwise() {
        let base = scenarios::double_integrator(0.2);
        let aug = augment(&base.system, 3);
        let t = 0.8;
        let big = expm(&aug.a, t).unwrap();
        let small = expm(&base.system.a, t).unwrap();
        for i in 0..3 {
            let block = big.view((2 * i, 2 * i), (2, 2)).clone_owned();
            assert!((block - &small).norm() < 1e-12);
        }
    }

    #[test]
    fn mse_target_single_sample_is_plain_ellipsoid() {
        let goal = DVector::zeros(2);
        let target = mse_target(&[1.0], &goal, 1.0).unwrap();
        assert_eq!(target.w, DMatrix::identity(2, 2));
        assert_eq!(target.level, 1.0);
    }

    #[test]
    fn mse_target_equal_weights_scale_identity() {
        let goal = DVector::zeros(2);
        let k = 4;
        let target = mse_target(&vec![1.0 / k as f64; k], &goal, 1.0).unwrap();
        assert_eq!(target.w, DMatrix::identity(8, 8) * k as f64);
    }

    #[test]
    fn mse_target_matches_double_sum_oracle() {
        let goal = DVector::zeros(2);
        let weights = [0.4, 0.35, 0.25];
        let target = mse_target(&weights, &goal, 0.04).unwrap();
        let cost = target.factor().unwrap();

        let states = [
            DVector::from_column_slice(&[0.1, -0.2]),
            DVector::from_column_slice(&[0.05, 0.0]),
            DVector::from_column_slice(&[-0.3, 0.15]),
        ];
        let mse: f64 = weights
            .iter()
            .zip(&states)
            .map(|(w, x)| w * x.dot(x))
            .sum();
        let stacked = stack_states(&states);
        assert!((cost.cost(&stacked) - (mse - 0.04)).abs() < 1e-12);
    }

    #[test]
    fn mse_target_rejects_bad_inputs() {
        let goal2 = DVector::from_column_slice(&[0.1, 0.0]);
        assert!(matches!(
            mse_target(&[1.0], &goal2, 1.0),
            Err(HopfError::NonOriginGoal)
        ));
        assert!(matches!(
            mse_target(&[0.5, 0.0], &DVector::zeros(2), 1.0),
            Err(HopfError::NonPositiveWeight { index: 1, .. })
        ));
    }
}
