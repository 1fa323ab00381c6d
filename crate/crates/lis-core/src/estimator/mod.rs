//! The distributed estimator and its covariance recursion.
//!
//! Each subsystem `i` keeps a pair of covariance-like blocks: the prior
//! `P̄ᵢ(k)` and the posterior `Pᵢ(k)`. The measurement update is the usual
//! Kalman one; the time update inflates the neighbor sum by the squared
//! decoupling variable `ϑᵢ²(k)`:
//!
//! ```text
//! Pᵢ(k)     = P̄ᵢ(k) − P̄ᵢ(k)Cᵢᵀ(CᵢP̄ᵢ(k)Cᵢᵀ + Rᵢ)⁻¹CᵢP̄ᵢ(k)
//! P̄ᵢ(k+1)  = ϑᵢ²(k) Σ_{j ∈ 𝕀ᵢ(k)∪{i}} A_ij(k) Pⱼ(k) A_ijᵀ(k) + Qᵢ(k)
//! ```
//!
//! Subsystem `i` reads only its own block and its in-neighbors' blocks;
//! the `*_observed` variants report every cross-subsystem read so tests can
//! enforce that locality contract.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, is_psd, symmetrize};
use crate::model::{build_topology, BlockPattern, LisModel};

mod checkpoint;
mod compact;

pub use checkpoint::{
    load_dmre_checkpoint, load_steady_checkpoint, save_dmre_checkpoint, save_steady_checkpoint,
};
pub use compact::{
    compact_dmre_step, covariance_measurement_update, covariance_time_update, steady_state_solve,
    CompactForm, SolveStatus, SteadySolveOptions, SteadyState,
};

/// Per-subsystem covariance pair of the DMRE at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct DmreState {
    k: usize,
    p: Vec<DMatrix<f64>>,
    p_bar: Vec<DMatrix<f64>>,
}

impl DmreState {
    /// Start the recursion at time `k = 0` from posterior blocks `P(0)`.
    ///
    /// By convention `P̄(0) := P(0)`; the prior at time 0 never enters the
    /// recursion, which first produces `P̄(1)`.
    pub fn new(pattern: &BlockPattern, posterior: Vec<DMatrix<f64>>) -> Result<Self> {
        if posterior.len() != pattern.s() {
            return Err(Error::DimensionMismatch(format!(
                "{} posterior blocks for {} subsystems",
                posterior.len(),
                pattern.s()
            )));
        }
        for (i, p) in posterior.iter().enumerate() {
            let ni = pattern.state_dim(i);
            if p.shape() != (ni, ni) {
                return Err(Error::DimensionMismatch(format!("P block {i} must be {ni}×{ni}")));
            }
            if !all_finite(p) {
                return Err(Error::NonFinite(format!("P block {i}")));
            }
            if !is_psd(p, 1e-10 * crate::linalg::max_abs(p).max(1.0)) {
                return Err(Error::NotPositiveDefinite(format!("initial P block {i}")));
            }
        }
        Ok(Self { k: 0, p: posterior.clone(), p_bar: posterior })
    }

    /// Rebuild a state at an arbitrary time index, e.g. from a checkpoint.
    pub fn from_parts(
        pattern: &BlockPattern,
        k: usize,
        p: Vec<DMatrix<f64>>,
        p_bar: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if p.len() != pattern.s() || p_bar.len() != pattern.s() {
            return Err(Error::DimensionMismatch("one P and P̄ block per subsystem".into()));
        }
        for i in 0..pattern.s() {
            let ni = pattern.state_dim(i);
            if p[i].shape() != (ni, ni) || p_bar[i].shape() != (ni, ni) {
                return Err(Error::DimensionMismatch(format!("blocks for subsystem {i} must be {ni}×{ni}")));
            }
            if !all_finite(&p[i]) || !all_finite(&p_bar[i]) {
                return Err(Error::NonFinite(format!("covariance block {i}")));
            }
        }
        Ok(Self { k, p, p_bar })
    }

    /// Default initialization `P(0) = I` per block.
    pub fn identity(pattern: &BlockPattern) -> Self {
        let p = (0..pattern.s())
            .map(|i| DMatrix::identity(pattern.state_dim(i), pattern.state_dim(i)))
            .collect();
        Self::new(pattern, p).expect("identity blocks are valid")
    }

    pub fn time_index(&self) -> usize {
        self.k
    }

    /// Posterior block `Pᵢ(k)`.
    pub fn posterior(&self, i: usize) -> &DMatrix<f64> {
        &self.p[i]
    }

    /// Prior block `P̄ᵢ(k)`.
    pub fn prior(&self, i: usize) -> &DMatrix<f64> {
        &self.p_bar[i]
    }

    pub fn posterior_blocks(&self) -> &[DMatrix<f64>] {
        &self.p
    }

    pub fn prior_blocks(&self) -> &[DMatrix<f64>] {
        &self.p_bar
    }
}

/// Local estimator gains at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    blocks: Vec<DMatrix<f64>>,
}

impl GainSet {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Self {
        Self { blocks }
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
}

/// Per-subsystem estimate pair (prediction `x̄ᵢ(k)`, posterior `x̂ᵢ(k)`).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    k: usize,
    x_hat: Vec<DVector<f64>>,
    x_bar: Vec<DVector<f64>>,
}

impl EstimatorState {
    /// Start at `k = 0` from initial estimates `x̂(0)` (with `x̄(0) := x̂(0)`).
    pub fn new(pattern: &BlockPattern, x_hat: Vec<DVector<f64>>) -> Result<Self> {
        if x_hat.len() != pattern.s() {
            return Err(Error::DimensionMismatch(format!(
                "{} estimate blocks for {} subsystems",
                x_hat.len(),
                pattern.s()
            )));
        }
        for (i, x) in x_hat.iter().enumerate() {
            if x.len() != pattern.state_dim(i) {
                return Err(Error::DimensionMismatch(format!(
                    "estimate block {i} has length {}, expected {}",
                    x.len(),
                    pattern.state_dim(i)
                )));
            }
        }
        Ok(Self { k: 0, x_hat: x_hat.clone(), x_bar: x_hat })
    }

    pub fn zero(pattern: &BlockPattern) -> Self {
        let x = (0..pattern.s()).map(|i| DVector::zeros(pattern.state_dim(i))).collect();
        Self::new(pattern, x).expect("zero blocks are valid")
    }

    pub fn time_index(&self) -> usize {
        self.k
    }

    pub fn estimate(&self, i: usize) -> &DVector<f64> {
        &self.x_hat[i]
    }

    pub fn prediction(&self, i: usize) -> &DVector<f64> {
        &self.x_bar[i]
    }

    pub fn estimates(&self) -> &[DVector<f64>] {
        &self.x_hat
    }
}

/// Kalman measurement update of one prior block: returns `(Pᵢ, Kᵢ)` with
/// `Kᵢ = P̄ᵢCᵢᵀ(CᵢP̄ᵢCᵢᵀ + Rᵢ)⁻¹`.
///
/// The innovation matrix is inverted through a Cholesky factorization; a
/// failed factorization signals a non-PD innovation (so a non-PD `Rᵢ`).
pub fn measurement_update(
    p_bar: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    context: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let cp = c * p_bar;
    let s = &cp * c.transpose() + r;
    let chol = crate::linalg::symmetrized(&s)
        .cholesky()
        .ok_or_else(|| Error::SingularInnovation(context.to_string()))?;
    // t = S⁻¹ C P̄, so K = tᵀ and P = P̄ − (C P̄)ᵀ t.
    let t = chol.solve(&cp);
    let mut p = p_bar - cp.transpose() * &t;
    symmetrize(&mut p);
    Ok((p, t.transpose()))
}

fn check_theta(theta: &[f64], s: usize) -> Result<()> {
    if theta.len() != s {
        return Err(Error::DimensionMismatch(format!(
            "{} decoupling variables for {} subsystems",
            theta.len(),
            s
        )));
    }
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidModel(format!("decoupling variable must be positive, got {t}")));
    }
    Ok(())
}

/// Advance the DMRE one step, reporting every cross-subsystem block read to
/// `observer(i, j)` (subsystem `i` reading subsystem `j`'s posterior).
pub fn dmre_step_observed(
    state: &DmreState,
    model: &LisModel,
    theta: &[f64],
    observer: &mut dyn FnMut(usize, usize),
) -> Result<DmreState> {
    let pattern = model.pattern();
    let s = pattern.s();
    check_theta(theta, s)?;
    if state.p.len() != s {
        return Err(Error::DimensionMismatch("DMRE state does not match the model".into()));
    }
    let k = state.k;
    model.check_time(k + 1)?;
    let topo = build_topology(model, k)?;

    let mut p_bar_next = Vec::with_capacity(s);
    for i in 0..s {
        let ni = pattern.state_dim(i);
        if state.p[i].shape() != (ni, ni) {
            return Err(Error::DimensionMismatch(format!("P block {i} must be {ni}×{ni}")));
        }
        let mut acc = model.q_block(k, i).clone();
        let scale = theta[i] * theta[i];
        for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
            observer(i, j);
            if let Some(a_ij) = model.a_block(k, i, j) {
                acc += scale * a_ij * &state.p[j] * a_ij.transpose();
            }
        }
        symmetrize(&mut acc);
        p_bar_next.push(acc);
    }

    let mut p_next = Vec::with_capacity(s);
    for (i, p_bar) in p_bar_next.iter().enumerate() {
        let (p, _) = measurement_update(
            p_bar,
            model.c_block(k + 1, i),
            model.r_block(k + 1, i),
            &format!("subsystem {i} at k={}", k + 1),
        )?;
        p_next.push(p);
    }
    Ok(DmreState { k: k + 1, p: p_next, p_bar: p_bar_next })
}

/// Advance the DMRE from time `k` to `k + 1`.
pub fn dmre_step(state: &DmreState, model: &LisModel, theta: &[f64]) -> Result<DmreState> {
    dmre_step_observed(state, model, theta, &mut |_, _| {})
}

/// Kalman-like local gains `Kᵢ(k) = P̄ᵢ(k)Cᵢᵀ(CᵢP̄ᵢ(k)Cᵢᵀ + Rᵢ(k))⁻¹` at the
/// state's time index.
pub fn local_gains(state: &DmreState, model: &LisModel) -> Result<GainSet> {
    let k = state.k;
    let blocks = (0..model.s())
        .map(|i| {
            measurement_update(
                &state.p_bar[i],
                model.c_block(k, i),
                model.r_block(k, i),
                &format!("subsystem {i} at k={k}"),
            )
            .map(|(_, gain)| gain)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainSet::new(blocks))
}

/// Advance the estimator from time `k − 1` to `k`, reporting neighbor reads.
///
/// `measurements` are `zᵢ(k)`; `gains` must already be the time-`k` gains.
pub fn estimator_step_observed(
    est: &EstimatorState,
    measurements: &[DVector<f64>],
    model: &LisModel,
    gains: &GainSet,
    observer: &mut dyn FnMut(usize, usize),
) -> Result<EstimatorState> {
    let pattern = model.pattern();
    let s = pattern.s();
    if measurements.len() != s || gains.blocks.len() != s || est.x_hat.len() != s {
        return Err(Error::DimensionMismatch(
            "measurements, gains and estimates must all have one block per subsystem".into(),
        ));
    }
    let k_prev = est.k;
    let k = k_prev + 1;
    model.check_time(k)?;
    let topo = build_topology(model, k_prev)?;

    let mut x_bar = Vec::with_capacity(s);
    let mut x_hat = Vec::with_capacity(s);
    for i in 0..s {
        let ni = pattern.state_dim(i);
        let mut pred = DVector::zeros(ni);
        for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
            observer(i, j);
            if est.x_hat[j].len() != pattern.state_dim(j) {
                return Err(Error::MissingNeighbor { subsystem: i, neighbor: j });
            }
            if let Some(a_ij) = model.a_block(k_prev, i, j) {
                pred += a_ij * &est.x_hat[j];
            }
        }
        let c = model.c_block(k, i);
        let z = &measurements[i];
        if z.len() != pattern.meas_dim(i) {
            return Err(Error::DimensionMismatch(format!(
                "measurement {i} has length {}, expected {}",
                z.len(),
                pattern.meas_dim(i)
            )));
        }
        let gain = &gains.blocks[i];
        if gain.shape() != (ni, pattern.meas_dim(i)) {
            return Err(Error::DimensionMismatch(format!("gain block {i} has wrong shape")));
        }
        let innovation = z - c * &pred;
        x_hat.push(&pred + gain * innovation);
        x_bar.push(pred);
    }
    Ok(EstimatorState { k, x_hat, x_bar })
}

/// Advance the estimator from time `k − 1` to `k`.
pub fn estimator_step(
    est: &EstimatorState,
    measurements: &[DVector<f64>],
    model: &LisModel,
    gains: &GainSet,
) -> Result<EstimatorState> {
    estimator_step_observed(est, measurements, model, gains, &mut |_, _| {})
}

/// Constant-gain estimator step using precomputed steady gains.
///
/// Identical recursion shape to [`estimator_step`]; with the gains fixed,
/// no covariance blocks need to be exchanged online.
pub fn steady_estimator_step(
    est: &EstimatorState,
    measurements: &[DVector<f64>],
    model: &LisModel,
    steady_gains: &GainSet,
) -> Result<EstimatorState> {
    estimator_step(est, measurements, model, steady_gains)
}

#[cfg(test)]
mod tests;
