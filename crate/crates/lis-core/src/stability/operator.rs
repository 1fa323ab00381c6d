//! Gain-parameterized positive operator on symmetric matrices.
//!
//! For a time-invariant model with decoupling variables ϑ and a gain set
//! 𝒢 = {𝒢₁, …, 𝒢ₛ}, the operator
//!
//! ```text
//! 𝔏_𝒢(X) = Σᵢ (𝒜ᵢ − 𝒢ᵢC) X (𝒜ᵢ − 𝒢ᵢC)ᵀ,   𝒜ᵢ = ϑᵢEᵢA
//! ```
//!
//! maps PSD matrices to PSD matrices, and its spectral radius dropping below
//! one is exactly what bounds the DMRE. The operator is represented by its
//! term list; the Kronecker matrix `Σᵢ Mᵢ ⊗ Mᵢ` is built lazily for dense
//! eigenvalue queries on small systems, with power iteration on the map form
//! as the large-system and non-convergence fallback.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{frob_inner, kron, symmetrize};
use crate::model::LisModel;

/// State dimension up to which the dense `n² × n²` Kronecker eigensolve is
/// used by default; beyond it the map-form power iteration takes over.
pub const DENSE_LIFT_MAX_STATE_DIM: usize = 40;

#[derive(Debug)]
pub struct LiftedOperator {
    terms: Vec<DMatrix<f64>>,
    dim: usize,
    kron: OnceLock<DMatrix<f64>>,
}

impl Clone for LiftedOperator {
    fn clone(&self) -> Self {
        Self { terms: self.terms.clone(), dim: self.dim, kron: OnceLock::new() }
    }
}

impl LiftedOperator {
    pub fn from_terms(terms: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = match terms.first() {
            Some(t) => t.nrows(),
            None => return Err(Error::InvalidModel("operator needs at least one term".into())),
        };
        for t in &terms {
            if t.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch("operator terms must be square and equally sized".into()));
            }
        }
        Ok(Self { terms, dim, kron: OnceLock::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[DMatrix<f64>] {
        &self.terms
    }

    /// `𝔏(X) = Σᵢ MᵢXMᵢᵀ`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for m in &self.terms {
            out += m * x * m.transpose();
        }
        out
    }

    /// Adjoint map `𝔏*(X) = Σᵢ MᵢᵀXMᵢ`, satisfying ⟨𝔏(X), Y⟩ = ⟨X, 𝔏*(Y)⟩.
    pub fn adjoint_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for m in &self.terms {
            out += m.transpose() * x * m;
        }
        out
    }

    /// Vectorized representation `Σᵢ Mᵢ ⊗ Mᵢ` (built on first use).
    pub fn kron_matrix(&self) -> &DMatrix<f64> {
        self.kron.get_or_init(|| {
            let n2 = self.dim * self.dim;
            let mut k = DMatrix::zeros(n2, n2);
            for m in &self.terms {
                k += kron(m, m);
            }
            k
        })
    }

    /// Spectral radius from the eigenvalues of the Kronecker representation.
    ///
    /// Falls back to power iteration if the eigensolver does not converge.
    pub fn spectral_radius_dense(&self) -> f64 {
        let k = self.kron_matrix();
        match nalgebra::linalg::Schur::try_new(k.clone(), 1e-14, 100_000) {
            Some(schur) => schur
                .complex_eigenvalues()
                .iter()
                .fold(0.0_f64, |r, ev| r.max(ev.norm())),
            None => self.spectral_radius_power(100_000, 1e-12),
        }
    }

    /// Power iteration on the map form, starting from the identity.
    ///
    /// The operator is positive, so its spectral radius is attained by an
    /// eigenvalue with a PSD eigenvector and the iteration converges from a
    /// definite start (up to the stated tolerance).
    pub fn spectral_radius_power(&self, max_iter: usize, tol: f64) -> f64 {
        let mut x = DMatrix::identity(self.dim, self.dim);
        x /= x.norm();
        let mut lambda = 0.0_f64;
        for _ in 0..max_iter {
            let mut y = self.apply(&x);
            symmetrize(&mut y);
            let norm = y.norm();
            if norm < 1e-300 {
                return 0.0;
            }
            // Rayleigh-type quotient with ‖x‖_F = 1.
            let next = frob_inner(&y, &x);
            x = y / norm;
            if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
                return next.max(0.0);
            }
            lambda = next;
        }
        lambda.max(0.0)
    }

    /// Spectral radius, dense for small systems and iterative beyond
    /// [`DENSE_LIFT_MAX_STATE_DIM`].
    ///
    /// Defective near-zero spectra (nilpotent lifts) push the dense
    /// eigensolve against its conditioning floor (~ε^(1/m) for an m-fold
    /// zero), so tiny dense answers are refined through the map form, which
    /// is exact there.
    pub fn spectral_radius(&self) -> f64 {
        if self.dim <= DENSE_LIFT_MAX_STATE_DIM {
            let dense = self.spectral_radius_dense();
            if dense < 1e-4 {
                self.spectral_radius_power(100_000, 1e-12)
            } else {
                dense
            }
        } else {
            self.spectral_radius_power(100_000, 1e-12)
        }
    }

    /// The adjoint operator as an owned value (term-transposed copy).
    pub fn adjoint(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|m| m.transpose()).collect(),
            dim: self.dim,
            kron: OnceLock::new(),
        }
    }
}

/// Scaled block-row selections `𝒜ᵢ = ϑᵢEᵢA` of a time-invariant model.
pub fn scaled_row_selections(model: &LisModel, theta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    if theta.len() != model.s() {
        return Err(Error::DimensionMismatch("one decoupling variable per subsystem".into()));
    }
    let pattern = model.pattern();
    let n = pattern.total_state_dim();
    let a = model.assemble_a(0);
    Ok((0..model.s())
        .map(|i| {
            let mut sel = DMatrix::zeros(n, n);
            let off = pattern.state_offset(i);
            let ni = pattern.state_dim(i);
            sel.view_mut((off, 0), (ni, n)).copy_from(&(theta[i] * a.rows(off, ni)));
            sel
        })
        .collect())
}

/// Build `𝔏_𝒢` with terms `Mᵢ = ϑᵢEᵢA − 𝒢ᵢC` for explicit global gains
/// `𝒢ᵢ ∈ ℝ^{n×m}`.
pub fn build_lifted_operator(
    model: &LisModel,
    theta: &[f64],
    gains: &[DMatrix<f64>],
) -> Result<LiftedOperator> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("the lifted operator needs a time-invariant model".into()));
    }
    let pattern = model.pattern();
    let (n, m) = (pattern.total_state_dim(), pattern.total_meas_dim());
    if gains.len() != model.s() {
        return Err(Error::DimensionMismatch("one gain per subsystem".into()));
    }
    for (i, g) in gains.iter().enumerate() {
        if g.shape() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "gain {i} must be {n}×{m}, got {:?}",
                g.shape()
            )));
        }
    }
    let c = model.assemble_c(0);
    let terms = scaled_row_selections(model, theta)?
        .into_iter()
        .zip(gains)
        .map(|(sel, g)| sel - g * &c)
        .collect();
    LiftedOperator::from_terms(terms)
}

/// Build `𝔏_𝒦` at the gains induced by a block-diagonal global prior:
/// `𝒦ᵢ = 𝒜ᵢP̄Cᵀ(CP̄Cᵀ + R)⁻¹`. Returns the operator and the gains.
pub fn steady_gain_operator(
    model: &LisModel,
    theta: &[f64],
    p_bar_global: &DMatrix<f64>,
) -> Result<(LiftedOperator, Vec<DMatrix<f64>>)> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("the lifted operator needs a time-invariant model".into()));
    }
    let c = model.assemble_c(0);
    let r = model.assemble_r(0);
    let cp = &c * p_bar_global;
    let s = &cp * c.transpose() + r;
    let chol = crate::linalg::symmetrized(&s)
        .cholesky()
        .ok_or_else(|| Error::SingularInnovation("steady gain operator".into()))?;
    // t = S⁻¹CP̄, so 𝒦ᵢ = 𝒜ᵢ tᵀ and Mᵢ = 𝒜ᵢ(I − tᵀC).
    let t = chol.solve(&cp);
    let gains: Vec<DMatrix<f64>> = scaled_row_selections(model, theta)?
        .iter()
        .map(|sel| sel * t.transpose())
        .collect();
    let op = build_lifted_operator(model, theta, &gains)?;
    Ok((op, gains))
}
