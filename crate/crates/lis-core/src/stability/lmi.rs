//! Stability LMIs without a general-purpose SDP solver.
//!
//! The distributed per-row LMI admits an exact closed-form test: with the
//! pseudoinverse choice `X_ij = ϑᵢA_ijCⱼ⁺` every residual
//! `ϑᵢA_ij − X_ijCⱼ = ϑᵢA_ij(I − Cⱼ⁺Cⱼ)` is Loewner-minimal — any other
//! choice moves the residual only inside the row space of `Cⱼ`, which adds a
//! PSD term — so the row is feasible iff `λ_max(Σⱼ residualⱼresidualⱼᵀ) < 1`
//! at that choice.
//!
//! The centralized LMI is certified through its equivalence with the
//! spectral radius of the gain-lifted operator: any gain set with
//! `ρ(𝔏_𝒢) < 1` yields an explicit solution pair via a Lyapunov sum. An SDP
//! backend could be slotted behind the same interface; it is not needed at
//! this scale.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, symmetrize};
use crate::model::{build_topology, LisModel};

use super::operator::{build_lifted_operator, LiftedOperator};

/// Outcome of the per-row distributed LMI test.
#[derive(Debug, Clone)]
pub struct DistributedLmiReport {
    pub subsystem: usize,
    pub feasible: bool,
    /// Loewner-minimal blocks `X_ij`, keyed by neighbor `j ∈ 𝕀ᵢ ∪ {i}`.
    pub x_blocks: BTreeMap<usize, DMatrix<f64>>,
    /// `λ_max(Σⱼ residualⱼ residualⱼᵀ)` at the minimal choice.
    pub residual_radius: f64,
}

/// Exact feasibility test of subsystem `i`'s distributed stability LMI.
///
/// Uses only row `i` of the transition blocks and the in-neighbors'
/// measurement matrices.
pub fn distributed_lmi_check(model: &LisModel, i: usize, theta_i: f64) -> Result<DistributedLmiReport> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("the distributed LMI needs a time-invariant model".into()));
    }
    if i >= model.s() {
        return Err(Error::InvalidModel(format!("subsystem {i} out of range")));
    }
    if !(theta_i > 0.0) {
        return Err(Error::InvalidModel("ϑᵢ must be positive".into()));
    }
    let pattern = model.pattern();
    let topo = build_topology(model, 0)?;
    let ni = pattern.state_dim(i);

    let mut x_blocks = BTreeMap::new();
    let mut residual_sum = DMatrix::<f64>::zeros(ni, ni);
    for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
        let a_ij = match model.a_block(0, i, j) {
            Some(a) => theta_i * a,
            None => continue, // structurally zero self block contributes nothing
        };
        let c_j = model.c_block(0, j);
        let c_pinv = c_j.clone().pseudo_inverse(1e-12).map_err(|e| {
            Error::EigenFailure(format!("pseudoinverse of C block {j} failed: {e}"))
        })?;
        let x_ij = &a_ij * &c_pinv;
        let residual = &a_ij - &x_ij * c_j;
        residual_sum += &residual * residual.transpose();
        x_blocks.insert(j, x_ij);
    }
    symmetrize(&mut residual_sum);
    let residual_radius = max_eigenvalue(&residual_sum);
    Ok(DistributedLmiReport {
        subsystem: i,
        feasible: residual_radius < 1.0,
        x_blocks,
        residual_radius,
    })
}

/// Run [`distributed_lmi_check`] on every row.
pub fn distributed_lmi_all_rows(model: &LisModel, theta: &[f64]) -> Result<Vec<DistributedLmiReport>> {
    (0..model.s()).map(|i| distributed_lmi_check(model, i, theta[i])).collect()
}

/// Assemble global gains `𝒢ᵢ` from per-row LMI witnesses: block-row `i` of
/// `𝒢ᵢ` holds `X_ij` at the measurement columns of each `j ∈ 𝕀ᵢ ∪ {i}`.
pub fn gains_from_row_witnesses(
    model: &LisModel,
    rows: &[DistributedLmiReport],
) -> Result<Vec<DMatrix<f64>>> {
    let pattern = model.pattern();
    let (n, m) = (pattern.total_state_dim(), pattern.total_meas_dim());
    rows.iter()
        .map(|row| {
            let i = row.subsystem;
            let mut g = DMatrix::zeros(n, m);
            for (&j, x_ij) in &row.x_blocks {
                if x_ij.shape() != (pattern.state_dim(i), pattern.meas_dim(j)) {
                    return Err(Error::DimensionMismatch(format!("witness block ({i}, {j})")));
                }
                g.view_mut((pattern.state_offset(i), pattern.meas_offset(j)), x_ij.shape())
                    .copy_from(x_ij);
            }
            Ok(g)
        })
        .collect()
}

/// Explicit solution pair of the centralized LMI.
#[derive(Debug, Clone)]
pub struct CentralizedLmiWitness {
    /// The PD matrix variable.
    pub x: DMatrix<f64>,
    /// One auxiliary variable per subsystem.
    pub y: Vec<DMatrix<f64>>,
    /// Least eigenvalue of the assembled LMI matrix (positive = verified).
    pub lmi_min_eig: f64,
}

/// Sum the Neumann series `Σ_t 𝔏ᵗ(I)`, the Lyapunov certificate of a
/// contractive operator.
fn lyapunov_sum(op: &LiftedOperator, max_iter: usize, tol: f64) -> Option<DMatrix<f64>> {
    let n = op.dim();
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iter {
        term = op.apply(&term);
        symmetrize(&mut term);
        sum += &term;
        if term.norm() < tol {
            return Some(sum);
        }
        if !crate::linalg::all_finite(&sum) || sum.norm() > 1e14 {
            return None;
        }
    }
    None
}

/// Build and verify the centralized LMI witness from a gain set with
/// `ρ(𝔏_𝒢) < 1`.
///
/// `X_lyap = Σ_t 𝔏_𝒢ᵗ(I)` satisfies `X_lyap − 𝔏_𝒢(X_lyap) = I ≻ 0`; the LMI
/// variables are `X = X_lyap⁻¹`, `Yᵢ = X𝒢ᵢ`. The assembled block matrix is
/// re-checked for positive definiteness.
pub fn centralized_witness_from_gains(
    model: &LisModel,
    theta: &[f64],
    gains: &[DMatrix<f64>],
) -> Result<Option<CentralizedLmiWitness>> {
    let op = build_lifted_operator(model, theta, gains)?;
    let Some(x_lyap) = lyapunov_sum(&op, 100_000, 1e-14) else {
        return Ok(None);
    };
    let Some(x) = x_lyap.clone().try_inverse() else {
        return Ok(None);
    };
    let x = crate::linalg::symmetrized(&x);
    let y: Vec<DMatrix<f64>> = gains.iter().map(|g| &x * g).collect();

    let lmi = assemble_centralized_lmi(model, theta, &x, &y)?;
    let lmi_min_eig = min_eigenvalue(&lmi);
    if lmi_min_eig > 0.0 {
        Ok(Some(CentralizedLmiWitness { x, y, lmi_min_eig }))
    } else {
        Ok(None)
    }
}

/// Assemble the centralized LMI block matrix
/// `[[X, X𝒜₁−Y₁C, …]; [⋆, X, 0…]; …]` for explicit variables.
pub fn assemble_centralized_lmi(
    model: &LisModel,
    theta: &[f64],
    x: &DMatrix<f64>,
    y: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let s = model.s();
    let n = model.pattern().total_state_dim();
    if y.len() != s {
        return Err(Error::DimensionMismatch("one Y block per subsystem".into()));
    }
    let c = model.assemble_c(0);
    let selections = super::operator::scaled_row_selections(model, theta)?;
    let mut big = DMatrix::<f64>::zeros(n * (s + 1), n * (s + 1));
    big.view_mut((0, 0), (n, n)).copy_from(x);
    for i in 0..s {
        let blk = x * &selections[i] - &y[i] * &c;
        big.view_mut((0, (i + 1) * n), (n, n)).copy_from(&blk);
        big.view_mut(((i + 1) * n, 0), (n, n)).copy_from(&blk.transpose());
        big.view_mut(((i + 1) * n, (i + 1) * n), (n, n)).copy_from(x);
    }
    Ok(big)
}

/// Diagnostic payload for centralized LMI feasibility via the operator
/// equivalence route.
#[derive(Debug, Clone)]
pub struct CentralizedLmiReport {
    pub feasible: super::Verdict,
    pub witness: Option<CentralizedLmiWitness>,
    /// Gains that certified the operator contraction, when any.
    pub certifying_gains: Option<Vec<DMatrix<f64>>>,
    pub operator_radius: Option<f64>,
    pub diagnostics: String,
}

/// Feasibility of the centralized stability LMI.
///
/// Certification path: stack per-row distributed witnesses when every row
/// passes, otherwise fall back to the steady gains of the DMRE probe. Either
/// gain set with `ρ(𝔏_𝒢) < 1` is converted into an explicit LMI solution.
/// An infeasible verdict is only issued when the DMRE probe diverges *and*
/// the local reachability condition holds (the regime where feasibility and
/// boundedness are equivalent); otherwise the verdict is inconclusive.
pub fn centralized_lmi_feasibility(model: &LisModel, theta: &[f64]) -> Result<CentralizedLmiReport> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("the centralized LMI needs a time-invariant model".into()));
    }
    // Route 1: distributed rows.
    let rows = distributed_lmi_all_rows(model, theta)?;
    if rows.iter().all(|r| r.feasible) {
        let gains = gains_from_row_witnesses(model, &rows)?;
        let op = build_lifted_operator(model, theta, &gains)?;
        let rho = op.spectral_radius();
        if rho < 1.0 {
            if let Some(witness) = centralized_witness_from_gains(model, theta, &gains)? {
                return Ok(CentralizedLmiReport {
                    feasible: super::Verdict::Yes,
                    witness: Some(witness),
                    certifying_gains: Some(gains),
                    operator_radius: Some(rho),
                    diagnostics: "certified by stacking per-row witnesses".into(),
                });
            }
        }
    }

    // Route 2: boundedness probe and its steady gains.
    let probe = super::boundedness_check(model, theta)?;
    match probe.bounded {
        super::Verdict::Yes => {
            let gains = match probe.witness {
                super::Witness::Gains(g) => g,
                _ => {
                    return Ok(CentralizedLmiReport {
                        feasible: super::Verdict::Inconclusive,
                        witness: None,
                        certifying_gains: None,
                        operator_radius: probe.spectral_radius,
                        diagnostics: "bounded verdict carried no gain witness".into(),
                    })
                }
            };
            let witness = centralized_witness_from_gains(model, theta, &gains)?;
            let feasible =
                if witness.is_some() { super::Verdict::Yes } else { super::Verdict::Inconclusive };
            Ok(CentralizedLmiReport {
                feasible,
                witness,
                certifying_gains: Some(gains),
                operator_radius: probe.spectral_radius,
                diagnostics: "certified via the steady gains of the covariance recursion".into(),
            })
        }
        super::Verdict::No => {
            if probe.condition1_holds {
                Ok(CentralizedLmiReport {
                    feasible: super::Verdict::No,
                    witness: None,
                    certifying_gains: None,
                    operator_radius: probe.spectral_radius,
                    diagnostics:
                        "covariance recursion diverges and local reachability holds: no solution exists"
                            .into(),
                })
            } else {
                Ok(CentralizedLmiReport {
                    feasible: super::Verdict::Inconclusive,
                    witness: None,
                    certifying_gains: None,
                    operator_radius: probe.spectral_radius,
                    diagnostics:
                        "recursion diverges but local reachability is unverified; feasibility undecided"
                            .into(),
                })
            }
        }
        super::Verdict::Inconclusive => Ok(CentralizedLmiReport {
            feasible: super::Verdict::Inconclusive,
            witness: None,
            certifying_gains: None,
            operator_radius: probe.spectral_radius,
            diagnostics: probe.diagnostics,
        }),
    }
}

/// Brute-force objective used to cross-check the closed-form row minimizer:
/// `λ_max(Σⱼ (ϑᵢA_ij − X_ijCⱼ)(ϑᵢA_ij − X_ijCⱼ)ᵀ)` for explicit blocks.
pub fn row_objective(
    model: &LisModel,
    i: usize,
    theta_i: f64,
    x_blocks: &BTreeMap<usize, DMatrix<f64>>,
) -> Result<f64> {
    let topo = build_topology(model, 0)?;
    let ni = model.pattern().state_dim(i);
    let mut sum = DMatrix::<f64>::zeros(ni, ni);
    for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
        let a_ij = match model.a_block(0, i, j) {
            Some(a) => theta_i * a,
            None => continue,
        };
        let residual = match x_blocks.get(&j) {
            Some(x) => &a_ij - x * model.c_block(0, j),
            None => a_ij,
        };
        sum += &residual * residual.transpose();
    }
    Ok(max_eigenvalue(&sum))
}
