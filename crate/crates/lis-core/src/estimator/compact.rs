//! Compact global form of the DMRE and the steady-state solver.
//!
//! With `P̄ = Diag(P̄₁, …, P̄ₛ)` the blockwise recursion collapses to
//!
//! ```text
//! P̄(k+1) = Ω ⊙ (𝒜P̄𝒜ᵀ + Q − 𝒜P̄Cᵀ(CP̄Cᵀ + R)⁻¹CP̄𝒜ᵀ)
//! ```
//!
//! where `𝒜` is the global transition matrix with block-row `i` scaled by
//! `ϑᵢ` and `Ω` masks everything but the diagonal blocks. The same update
//! also factors as a time update `X ↦ Σᵢ𝒜ᵢX𝒜ᵢᵀ + Q` composed with the
//! global measurement update; both routes are implemented and cross-checked
//! in tests.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, block_diag, max_abs_diff, symmetrize};
use crate::model::LisModel;

use super::{measurement_update, GainSet};

/// Precomputed global matrices for the compact DMRE step at one epoch.
#[derive(Debug, Clone)]
pub struct CompactForm {
    /// `𝒜`: global transition matrix with block-row `i` scaled by `ϑᵢ`.
    pub a_scaled: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    state_offsets: Vec<usize>,
    state_dims: Vec<usize>,
    meas_offsets: Vec<usize>,
    meas_dims: Vec<usize>,
}

impl CompactForm {
    pub fn new(model: &LisModel, k: usize, theta: &[f64]) -> Result<Self> {
        super::check_theta(theta, model.s())?;
        model.check_time(k)?;
        let pattern = model.pattern();
        let mut a_scaled = model.assemble_a(k);
        for i in 0..pattern.s() {
            let rows = pattern.state_offset(i)..pattern.state_offset(i) + pattern.state_dim(i);
            for r in rows {
                for c in 0..a_scaled.ncols() {
                    a_scaled[(r, c)] *= theta[i];
                }
            }
        }
        Ok(Self {
            a_scaled,
            c: model.assemble_c(k),
            q: model.assemble_q(k),
            r: model.assemble_r(k),
            state_offsets: (0..pattern.s()).map(|i| pattern.state_offset(i)).collect(),
            state_dims: pattern.state_dims().to_vec(),
            meas_offsets: (0..pattern.s()).map(|i| pattern.meas_offset(i)).collect(),
            meas_dims: pattern.meas_dims().to_vec(),
        })
    }

    /// `Ω ⊙ X`: zero every off-diagonal block.
    pub fn block_diag_mask(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (&off, &dim) in self.state_offsets.iter().zip(&self.state_dims) {
            out.view_mut((off, off), (dim, dim)).copy_from(&x.view((off, off), (dim, dim)));
        }
        out
    }

    /// Extract the diagonal blocks of a global state-sized matrix.
    pub fn diag_blocks(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.state_offsets
            .iter()
            .zip(&self.state_dims)
            .map(|(&off, &dim)| x.view((off, off), (dim, dim)).into_owned())
            .collect()
    }

    /// One compact DMRE step `P̄(k) → P̄(k+1)`.
    pub fn step(&self, p_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.a_scaled.nrows();
        if p_bar.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "global prior must be {n}×{n}, got {:?}",
                p_bar.shape()
            )));
        }
        let cp = &self.c * p_bar;
        let s = &cp * self.c.transpose() + &self.r;
        let chol = crate::linalg::symmetrized(&s)
            .cholesky()
            .ok_or_else(|| Error::SingularInnovation("global compact step".into()))?;
        // 𝒜P̄𝒜ᵀ + Q − (𝒜P̄Cᵀ) S⁻¹ (CP̄𝒜ᵀ)
        let ap = &self.a_scaled * p_bar;
        let apct = &ap * self.c.transpose();
        let t = chol.solve(&apct.transpose());
        let mut next = &ap * self.a_scaled.transpose() + &self.q - apct * t;
        symmetrize(&mut next);
        Ok(self.block_diag_mask(&next))
    }

    /// Block gains `Kᵢ = P̄ᵢCᵢᵀ(CᵢP̄ᵢCᵢᵀ + Rᵢ)⁻¹` from a block-diagonal
    /// global prior.
    pub fn gains(&self, p_bar: &DMatrix<f64>) -> Result<GainSet> {
        let blocks = (0..self.state_dims.len())
            .map(|i| {
                let p = p_bar
                    .view((self.state_offsets[i], self.state_offsets[i]), (self.state_dims[i], self.state_dims[i]))
                    .into_owned();
                let c = self
                    .c
                    .view((self.meas_offsets[i], self.state_offsets[i]), (self.meas_dims[i], self.state_dims[i]))
                    .into_owned();
                let r = self
                    .r
                    .view((self.meas_offsets[i], self.meas_offsets[i]), (self.meas_dims[i], self.meas_dims[i]))
                    .into_owned();
                measurement_update(&p, &c, &r, &format!("steady gain block {i}")).map(|(_, gain)| gain)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GainSet::new(blocks))
    }
}

/// One compact DMRE step built from the model at time `k`.
pub fn compact_dmre_step(
    model: &LisModel,
    k: usize,
    theta: &[f64],
    p_bar: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    CompactForm::new(model, k, theta)?.step(p_bar)
}

/// Global covariance time update `X ↦ Σᵢ 𝒜ᵢX𝒜ᵢᵀ + Q(k)` with
/// `𝒜ᵢ = ϑᵢEᵢA(k)` (block-row selector route).
pub fn covariance_time_update(
    model: &LisModel,
    k: usize,
    theta: &[f64],
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    super::check_theta(theta, model.s())?;
    let pattern = model.pattern();
    let a = model.assemble_a(k);
    let n = pattern.total_state_dim();
    if x.shape() != (n, n) {
        return Err(Error::DimensionMismatch("covariance must be n×n".into()));
    }
    let mut out = model.assemble_q(k);
    for i in 0..pattern.s() {
        let rows = a.rows(pattern.state_offset(i), pattern.state_dim(i));
        let blk = theta[i] * theta[i] * (&rows * x * rows.transpose());
        out.view_mut(
            (pattern.state_offset(i), pattern.state_offset(i)),
            (pattern.state_dim(i), pattern.state_dim(i)),
        )
        .zip_apply(&blk, |o, b| *o += b);
    }
    symmetrize(&mut out);
    Ok(out)
}

/// Global measurement update `X ↦ X − XCᵀ(CXCᵀ + R)⁻¹CX` at time `k`.
pub fn covariance_measurement_update(
    model: &LisModel,
    k: usize,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let c = model.assemble_c(k);
    let r = model.assemble_r(k);
    let (p, _) = measurement_update(x, &c, &r, &format!("global measurement update at k={k}"))?;
    Ok(p)
}

/// How a steady-state solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Successive iterates differ by less than the tolerance.
    Converged,
    /// The iterate trace crossed the divergence ceiling: no bounded solution.
    Diverged,
    /// The iteration budget ran out before meeting the tolerance.
    MaxIter,
}

/// Fixed point of the compact DMRE together with the steady gains.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Diagonal blocks of the fixed-point prior `P̄*`.
    pub p_bar_star: Vec<DMatrix<f64>>,
    /// Steady block gains `K*ᵢ`.
    pub k_star: GainSet,
    pub iterations: usize,
    /// Max-norm difference of the last two iterates.
    pub residual: f64,
    /// Largest trace seen along the iteration.
    pub sup_trace: f64,
    pub status: SolveStatus,
}

impl SteadyState {
    /// Assembled block-diagonal `P̄*`.
    pub fn p_bar_global(&self) -> DMatrix<f64> {
        block_diag(&self.p_bar_star)
    }
}

/// Options for [`steady_state_solve`].
#[derive(Debug, Clone)]
pub struct SteadySolveOptions {
    /// Max-norm tolerance on successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// The solve is declared divergent when
    /// `trace(P̄) > ceiling_ratio × max(trace(Q), trace(P̄_init))`.
    pub ceiling_ratio: f64,
    /// Initial global prior `P̄(1)`; defaults to `Q`, which makes the
    /// iterate sequence monotone nondecreasing.
    pub init: Option<DMatrix<f64>>,
}

impl Default for SteadySolveOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 10_000, ceiling_ratio: 1e12, init: None }
    }
}

/// Iterate the compact DMRE of a time-invariant model to its fixed point.
///
/// Returns the fixed point and steady gains on convergence; a `Diverged`
/// status (unboundedness diagnostic) or `MaxIter` otherwise.
pub fn steady_state_solve(
    model: &LisModel,
    theta: &[f64],
    opts: &SteadySolveOptions,
) -> Result<SteadyState> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel(
            "steady-state solve requires a time-invariant model".into(),
        ));
    }
    let form = CompactForm::new(model, 0, theta)?;
    let n = model.pattern().total_state_dim();
    let mut p_bar = match &opts.init {
        Some(init) => {
            if init.shape() != (n, n) {
                return Err(Error::DimensionMismatch("initial prior must be n×n".into()));
            }
            form.block_diag_mask(init)
        }
        None => form.q.clone(),
    };
    let ceiling =
        opts.ceiling_ratio * form.q.trace().max(p_bar.trace()).max(n as f64 * 1e-300);

    let mut residual = f64::INFINITY;
    let mut sup_trace = p_bar.trace();
    for iter in 1..=opts.max_iter {
        if !all_finite(&p_bar) || p_bar.trace() > ceiling {
            let k_star = form.gains(&p_bar).unwrap_or_else(|_| GainSet::new(Vec::new()));
            return Ok(SteadyState {
                p_bar_star: form.diag_blocks(&p_bar),
                k_star,
                iterations: iter - 1,
                residual,
                sup_trace,
                status: SolveStatus::Diverged,
            });
        }
        let next = form.step(&p_bar)?;
        residual = max_abs_diff(&next, &p_bar);
        p_bar = next;
        sup_trace = sup_trace.max(p_bar.trace());
        if residual < opts.tol {
            let k_star = form.gains(&p_bar)?;
            return Ok(SteadyState {
                p_bar_star: form.diag_blocks(&p_bar),
                k_star,
                iterations: iter,
                residual,
                sup_trace,
                status: SolveStatus::Converged,
            });
        }
    }
    let k_star = form.gains(&p_bar)?;
    Ok(SteadyState {
        p_bar_star: form.diag_blocks(&p_bar),
        k_star,
        iterations: opts.max_iter,
        residual,
        sup_trace,
        status: SolveStatus::MaxIter,
    })
}
