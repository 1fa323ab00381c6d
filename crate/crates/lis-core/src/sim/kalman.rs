//! Centralized time-varying Kalman filter on the assembled global model.
//!
//! This is the exact global covariance recursion, kept independent of the
//! distributed code paths: it is both the accuracy floor in comparisons and
//! the reference oracle the single-subsystem reduction is checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::LisModel;

#[derive(Debug, Clone)]
pub struct KalmanState {
    pub k: usize,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(model: &LisModel, x0: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        let n = model.pattern().total_state_dim();
        if x0.len() != n || p0.shape() != (n, n) {
            return Err(Error::DimensionMismatch("global initial state/covariance".into()));
        }
        Ok(Self { k: 0, x: x0, p: p0 })
    }
}

/// Advance the global filter from `k` to `k + 1` with measurement `z(k+1)`.
pub fn kalman_step(state: &KalmanState, z: &DVector<f64>, model: &LisModel) -> Result<KalmanState> {
    let k = state.k;
    let a = model.assemble_a(k);
    let q = model.assemble_q(k);
    let c = model.assemble_c(k + 1);
    let r = model.assemble_r(k + 1);
    if z.len() != c.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "global measurement has length {}, expected {}",
            z.len(),
            c.nrows()
        )));
    }

    let x_pred = &a * &state.x;
    let mut p_pred = &a * &state.p * a.transpose() + q;
    symmetrize(&mut p_pred);

    let cp = &c * &p_pred;
    let s = &cp * c.transpose() + r;
    let chol = crate::linalg::symmetrized(&s)
        .cholesky()
        .ok_or_else(|| Error::SingularInnovation(format!("global filter at k={}", k + 1)))?;
    let gain = chol.solve(&cp).transpose();
    let x = &x_pred + &gain * (z - &c * &x_pred);
    let mut p = &p_pred - &gain * cp;
    symmetrize(&mut p);
    Ok(KalmanState { k: k + 1, x, p })
}
