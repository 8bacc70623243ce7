//! Dense matrix exponentials and the time-sampled operator stack.
//!
//! `expm` implements scaling-and-squaring with a degree-13 Padé approximant
//! (Higham 2005). `expm_action` evaluates `e^{tA} M` by a scaled Taylor
//! recurrence on `M` when `M` is narrow, which avoids forming `e^{tA}` at
//! all; it falls back to the dense path otherwise.
//!
//! [`assemble_stack`] builds the quadrature blocks
//! `K_i = (-e^{-(T - t_i) A} B Q)^T` on the left-Riemann grid `t_i = i*dt`
//! (or the trapezoid grid, which adds the `t = T` node with half end
//! weights), together with a power-iteration estimate of the stacked
//! operator's 2-norm.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HopfError, Result};
use crate::problem::{HopfProblem, QuadratureRule};

/// Padé(13) numerator coefficients (Higham 2005, Table 10.4 scaling).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold theta_13 for the degree-13 approximant.
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut max = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        max = max.max(s);
    }
    max
}

fn check_finite(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        Err(HopfError::NonFinite(what))
    } else {
        Ok(())
    }
}

/// Compute `e^{tA}` for a square matrix `A`.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    check_finite(a, "expm input")?;
    if !t.is_finite() {
        return Err(HopfError::NonFinite("expm time"));
    }

    let at = a * t;
    let norm = one_norm(&at);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = &at / 2f64.powi(s as i32);

    let mut result = pade13(&scaled)?;
    for _ in 0..s {
        result = &result * &result;
    }
    Ok(result)
}

fn pade13(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9];
    let u = a * (&a6 * &u_inner
        + &a6 * PADE13[7]
        + &a4 * PADE13[5]
        + &a2 * PADE13[3]
        + &eye * PADE13[1]);

    let v_inner = &a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8];
    let v = &a6 * &v_inner + &a6 * PADE13[6] + &a4 * PADE13[4] + &a2 * PADE13[2] + &eye * PADE13[0];

    let denom = &v - &u;
    let numer = &v + &u;
    denom
        .lu()
        .solve(&numer)
        .ok_or(HopfError::FactorizationFailed)
}

/// Taylor truncation threshold for the action path; `||tA||_1 <= 1` per
/// scaling step keeps the series short and forward-stable.
const ACTION_THETA: f64 = 1.0;
const ACTION_MAX_TERMS: usize = 64;

/// Compute `e^{tA} M` without forming `e^{tA}` when `M` is narrow.
pub fn expm_action(a: &DMatrix<f64>, t: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm_action requires a square matrix");
    assert_eq!(n, m.nrows(), "operand row count must match A");
    check_finite(a, "expm_action input")?;
    check_finite(m, "expm_action operand")?;
    if !t.is_finite() {
        return Err(HopfError::NonFinite("expm_action time"));
    }

    if t == 0.0 {
        return Ok(m.clone());
    }
    // Wide operands gain nothing from the action path.
    if m.ncols() >= n {
        return Ok(expm(a, t)? * m);
    }

    let at_norm = one_norm(a) * t.abs();
    let steps = (at_norm / ACTION_THETA).ceil().max(1.0) as usize;
    let h = t / steps as f64;

    let mut f = m.clone();
    for _ in 0..steps {
        f = taylor_apply(a, h, &f);
    }
    check_finite(&f, "expm_action result")?;
    Ok(f)
}

/// One Taylor step: `e^{hA} F` summed until the term is negligible.
fn taylor_apply(a: &DMatrix<f64>, h: f64, f: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sum = f.clone();
    let mut term = f.clone();
    for k in 1..=ACTION_MAX_TERMS {
        term = a * &term * (h / k as f64);
        sum += &term;
        if one_norm(&term) <= f64::EPSILON * one_norm(&sum) {
            break;
        }
    }
    sum
}

/// Quadrature-sampled operator stack.
///
/// Row block `i` is `K_i = (-e^{-(T - t_i) A} B Q)^T` (shape m-by-n) with
/// quadrature weight `weights[i]`. The stack acts as the tall
/// `(count*m)`-by-`n` matrix obtained by concatenating the blocks.
#[derive(Debug, Clone)]
pub struct StackedOperator {
    blocks: Vec<DMatrix<f64>>,
    /// The blocks concatenated into one tall matrix; one dense product
    /// beats per-block multiplies by a wide margin for small blocks.
    dense: DMatrix<f64>,
    times: Vec<f64>,
    weights: Vec<f64>,
    delta_t: f64,
    horizon: f64,
    norm_estimate: f64,
}

impl StackedOperator {
    /// Assemble from explicit blocks; computes the norm estimate.
    pub fn from_blocks(
        blocks: Vec<DMatrix<f64>>,
        times: Vec<f64>,
        weights: Vec<f64>,
        delta_t: f64,
        horizon: f64,
    ) -> Self {
        assert_eq!(blocks.len(), times.len());
        assert_eq!(blocks.len(), weights.len());
        assert!(!blocks.is_empty(), "stack must hold at least one block");
        let m = blocks[0].nrows();
        let n = blocks[0].ncols();
        let mut dense = DMatrix::zeros(m * blocks.len(), n);
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(b.shape(), (m, n), "all blocks must share one shape");
            dense.view_mut((i * m, 0), (m, n)).copy_from(b);
        }
        let norm_estimate = spectral_norm(&dense);
        Self {
            blocks,
            dense,
            times,
            weights,
            delta_t,
            horizon,
            norm_estimate,
        }
    }

    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Operator 2-norm estimate of the concatenated stack.
    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// Rows per block (the control dimension).
    pub fn block_rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Columns (the state dimension).
    pub fn state_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// `y = K p`, blocks concatenated in index order.
    pub fn apply(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.rows());
        self.apply_into(p, &mut y);
        y
    }

    /// `y = K p` written into a preallocated buffer.
    pub fn apply_into(&self, p: &DVector<f64>, y: &mut DVector<f64>) {
        y.gemv(1.0, &self.dense, p, 0.0);
    }

    /// `x = K^T y` for a stacked dual vector.
    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        self.apply_transpose_into(y, &mut x);
        x
    }

    /// `x = K^T y` written into a preallocated buffer.
    pub fn apply_transpose_into(&self, y: &DVector<f64>, x: &mut DVector<f64>) {
        x.gemv_tr(1.0, &self.dense, y, 0.0);
    }

    /// Total row count of the concatenated stack.
    pub fn rows(&self) -> usize {
        self.dense.nrows()
    }
}

const POWER_ITER_TOL: f64 = 1e-8;
const POWER_ITER_MAX: usize = 500;

/// Largest singular value of the stacked operator by power iteration on
/// `K^T K`, started from the deterministic normalized all-ones vector.
fn spectral_norm(dense: &DMatrix<f64>) -> f64 {
    let n = dense.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut kv = DVector::zeros(dense.nrows());
    let mut w = DVector::zeros(n);
    let mut lambda = 0.0f64;
    for _ in 0..POWER_ITER_MAX {
        kv.gemv(1.0, dense, &v, 0.0);
        w.gemv_tr(1.0, dense, &kv, 0.0);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let new_lambda = v.dot(&w);
        v.copy_from(&w);
        v /= norm;
        if (new_lambda - lambda).abs() <= POWER_ITER_TOL * new_lambda.max(f64::MIN_POSITIVE) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(0.0).sqrt()
}

/// Build the operator stack for one horizon.
///
/// Blocks are independent and assembled in parallel; the result is
/// deterministic regardless of thread count.
pub fn assemble_stack(problem: &HopfProblem, horizon: f64) -> Result<StackedOperator> {
    if !(horizon > 0.0) {
        return Err(HopfError::HorizonNonPositive(horizon));
    }
    let n = problem.quadrature_n;
    let delta_t = horizon / n as f64;
    let (node_count, weights): (usize, Vec<f64>) = match problem.quadrature_rule {
        QuadratureRule::LeftRiemann => (n, vec![delta_t; n]),
        QuadratureRule::Trapezoid => {
            let mut w = vec![delta_t; n + 1];
            w[0] = delta_t / 2.0;
            w[n] = delta_t / 2.0;
            (n + 1, w)
        }
    };
    let times: Vec<f64> = (0..node_count).map(|i| i as f64 * delta_t).collect();

    let sys = &problem.system;
    let bq = &sys.b * &sys.q;
    let blocks: Vec<DMatrix<f64>> = times
        .par_iter()
        .map(|&t_i| {
            // K_i = (-e^{-(T - t_i) A} B Q)^T
            let action = expm_action(&sys.a, -(horizon - t_i), &bq)?;
            Ok((-action).transpose())
        })
        .collect::<Result<_>>()?;

    Ok(StackedOperator::from_blocks(
        blocks, times, weights, delta_t, horizon,
    ))
}
