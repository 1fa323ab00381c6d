//! Stability analysis toolkit.
//!
//! Houses the reachability/detectability checkers, the gain-lifted operator
//! with its spectral radius, LMI feasibility tests, boundedness verdicts for
//! the covariance recursion, parameter-condition verification and
//! coupling-strength sweeps.
//!
//! Boundedness of the DMRE is only semidecidable numerically, so verdicts
//! are tri-state: `Yes` requires an operator radius below `1 − 1e-9` or a
//! verified LMI witness, `No` requires detected divergence, everything else
//! is `Inconclusive`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimator::{steady_state_solve, SolveStatus, SteadySolveOptions};
use crate::linalg::{max_eigenvalue, min_eigenvalue, sqrt_psd};
use crate::model::{decoupling_variables, DecouplingPolicy, LisModel};

mod gramian;
mod lmi;
mod operator;

pub use gramian::{
    detectability_check, reachability_check, uniform_detectability_grid_search,
    uniform_detectability_probe, uniform_reachability_gramian, DetectabilityReport,
    ProbeVerdict, ReachabilityReport, UniformDetectabilityParams, UniformDetectabilityReport,
    UniformReachabilityReport,
};
pub use lmi::{
    assemble_centralized_lmi, centralized_lmi_feasibility, centralized_witness_from_gains,
    distributed_lmi_all_rows, distributed_lmi_check, gains_from_row_witnesses, row_objective,
    CentralizedLmiReport, CentralizedLmiWitness, DistributedLmiReport,
};
pub use operator::{
    build_lifted_operator, scaled_row_selections, steady_gain_operator, LiftedOperator,
    DENSE_LIFT_MAX_STATE_DIM,
};

/// Spectral-radius margin below one required for a `Yes` verdict.
pub const RADIUS_TOL: f64 = 1e-9;

/// Eigenvalue threshold for reachability Gramians.
pub const GRAMIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Yes => write!(f, "yes"),
            Verdict::No => write!(f, "no"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Evidence attached to a stability verdict.
#[derive(Debug, Clone)]
pub enum Witness {
    /// A gain set with `ρ(𝔏_𝒢) < 1`.
    Gains(Vec<DMatrix<f64>>),
    /// An explicit centralized LMI solution.
    Lmi(CentralizedLmiWitness),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisMethod {
    /// Iterating the covariance recursion and checking the steady operator.
    DmreProbe,
    /// Stacked per-row LMI witnesses.
    DistributedLmi,
    /// Centralized LMI certification.
    CentralizedLmi,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub bounded: Verdict,
    /// `ρ(𝔏)` at the certifying (or last-iterate) gains, when computable.
    pub spectral_radius: Option<f64>,
    pub witness: Witness,
    pub method: AnalysisMethod,
    /// Whether local reachability of `(A_ii, √Qᵢ)` was verified; without it
    /// the operator test is sufficient but not necessary, so `No` verdicts
    /// cannot claim LMI infeasibility.
    pub condition1_holds: bool,
    pub diagnostics: String,
}

/// Verify Condition 1 (reachability of every `(A_ii, √Qᵢ)`) for a
/// time-invariant model.
fn condition1_time_invariant(model: &LisModel) -> Result<bool> {
    for i in 0..model.s() {
        let ni = model.pattern().state_dim(i);
        let a_ii = model
            .a_block(0, i, i)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(ni, ni));
        let q_root = sqrt_psd(model.q_block(0, i))?;
        if !reachability_check(&a_ii, &q_root, GRAMIAN_TOL)?.reachable {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decide uniform boundedness of the DMRE for a time-invariant model.
///
/// Strategy: iterate the covariance recursion from `P̄(1) = Q`. On
/// convergence, build the lifted operator at the steady gains and demand
/// `ρ < 1 − tol` (witnessed `Yes`); on trace blow-up report `No`; an
/// exhausted iteration budget is `Inconclusive`.
pub fn boundedness_check(model: &LisModel, theta: &[f64]) -> Result<StabilityReport> {
    boundedness_check_with(model, theta, &SteadySolveOptions::default())
}

pub fn boundedness_check_with(
    model: &LisModel,
    theta: &[f64],
    opts: &SteadySolveOptions,
) -> Result<StabilityReport> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("boundedness check needs a time-invariant model".into()));
    }
    let condition1_holds = condition1_time_invariant(model)?;
    let steady = steady_state_solve(model, theta, opts)?;
    boundedness_from_steady(model, theta, &steady, condition1_holds)
}

/// Turn a finished steady-state solve into a boundedness verdict.
pub fn boundedness_from_steady(
    model: &LisModel,
    theta: &[f64],
    steady: &crate::estimator::SteadyState,
    condition1_holds: bool,
) -> Result<StabilityReport> {
    let cond1_note = if condition1_holds {
        "local reachability verified"
    } else {
        "local reachability NOT verified: operator test is sufficient-only"
    };
    let p_bar_global = steady.p_bar_global();
    match steady.status {
        SolveStatus::Converged => {
            let (op, gains) = steady_gain_operator(model, theta, &p_bar_global)?;
            let rho = op.spectral_radius();
            if rho < 1.0 - RADIUS_TOL {
                Ok(StabilityReport {
                    bounded: Verdict::Yes,
                    spectral_radius: Some(rho),
                    witness: Witness::Gains(gains),
                    method: AnalysisMethod::DmreProbe,
                    condition1_holds,
                    diagnostics: format!(
                        "recursion converged in {} iterations (residual {:.3e}); ρ = {rho:.6e}; {cond1_note}",
                        steady.iterations, steady.residual
                    ),
                })
            } else {
                Ok(StabilityReport {
                    bounded: Verdict::Inconclusive,
                    spectral_radius: Some(rho),
                    witness: Witness::None,
                    method: AnalysisMethod::DmreProbe,
                    condition1_holds,
                    diagnostics: format!(
                        "recursion converged but ρ = {rho:.6e} is not below 1 − {RADIUS_TOL}; {cond1_note}"
                    ),
                })
            }
        }
        SolveStatus::Diverged => {
            // Best-effort radius at the diverging iterate, as a diagnostic.
            let rho = steady_gain_operator(model, theta, &p_bar_global)
                .ok()
                .map(|(op, _)| op.spectral_radius());
            Ok(StabilityReport {
                bounded: Verdict::No,
                spectral_radius: rho,
                witness: Witness::None,
                method: AnalysisMethod::DmreProbe,
                condition1_holds,
                diagnostics: format!(
                    "trace crossed the divergence ceiling after {} iterations; {cond1_note}",
                    steady.iterations
                ),
            })
        }
        SolveStatus::MaxIter => Ok(StabilityReport {
            bounded: Verdict::Inconclusive,
            spectral_radius: None,
            witness: Witness::None,
            method: AnalysisMethod::DmreProbe,
            condition1_holds,
            diagnostics: format!(
                "no convergence after {} iterations (residual {:.3e}); {cond1_note}",
                steady.iterations, steady.residual
            ),
        }),
    }
}

/// Per-subsystem outcome of the Condition 1 probe.
#[derive(Debug, Clone)]
pub struct SubsystemReachability {
    pub subsystem: usize,
    pub min_gramian_eig: f64,
    pub passes: bool,
}

/// Verification of the four parameter conditions used by the stability
/// results.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// Condition 1: windowed reachability Gramian of `(A_ii(k), √Qᵢ(k))`.
    pub cond1: Vec<SubsystemReachability>,
    pub cond1_pass: bool,
    /// Condition 2 bounds: `Qᵢ(k) ⪯ q_u I`, `r_l I ⪯ Rᵢ(k) ⪯ r_u I`,
    /// exact eigenvalue extrema over the schedule's epochs.
    pub q_upper: f64,
    pub r_lower: f64,
    pub r_upper: f64,
    pub cond2_pass: bool,
    /// Condition 3: observed ceiling `sup λ_max(Pᵢ(k))` over a supplied
    /// recursion trace (empirical evidence only).
    pub p_ceiling: Option<f64>,
    /// Condition 4: extrema of the decoupling variables over the horizon.
    pub theta_min: f64,
    pub theta_max: f64,
    pub cond4_pass: bool,
    pub horizon: usize,
}

/// Evaluate Conditions 1–4 for a model under a decoupling policy.
///
/// Time-varying quantities are probed on `k ∈ [0, horizon]` and labeled as
/// finite-horizon evidence. `trace` optionally supplies an executed DMRE
/// trajectory for the Condition 3 ceiling.
pub fn verify_conditions(
    model: &LisModel,
    policy: DecouplingPolicy,
    horizon: usize,
    trace: Option<&[crate::estimator::DmreState]>,
) -> Result<ConditionReport> {
    let s = model.s();
    let pattern = model.pattern();
    let probe_horizon = if model.is_time_invariant() { 0 } else { horizon };

    let mut cond1 = Vec::with_capacity(s);
    for i in 0..s {
        let ni = pattern.state_dim(i);
        let seq = |k: usize| {
            let a = model
                .a_block(k, i, i)
                .cloned()
                .unwrap_or_else(|| DMatrix::zeros(ni, ni));
            let q_root = sqrt_psd(model.q_block(k, i)).unwrap_or_else(|_| DMatrix::zeros(ni, ni));
            (a, q_root)
        };
        let report =
            uniform_reachability_gramian(&seq, ni.saturating_sub(1), GRAMIAN_TOL, probe_horizon)?;
        cond1.push(SubsystemReachability {
            subsystem: i,
            min_gramian_eig: report.min_gramian_eig,
            passes: report.passes,
        });
    }
    let cond1_pass = cond1.iter().all(|c| c.passes);

    let mut q_upper = f64::NEG_INFINITY;
    let mut r_lower = f64::INFINITY;
    let mut r_upper = f64::NEG_INFINITY;
    for (_, epoch) in model.epochs() {
        for i in 0..s {
            q_upper = q_upper.max(max_eigenvalue(&epoch.q_blocks()[i]));
            r_lower = r_lower.min(min_eigenvalue(&epoch.r_blocks()[i]));
            r_upper = r_upper.max(max_eigenvalue(&epoch.r_blocks()[i]));
        }
    }
    let cond2_pass = r_lower > 0.0 && q_upper.is_finite() && r_upper.is_finite();

    let p_ceiling = trace.map(|states| {
        states
            .iter()
            .flat_map(|st| st.posterior_blocks().iter().map(max_eigenvalue))
            .fold(f64::NEG_INFINITY, f64::max)
    });

    let mut theta_min = f64::INFINITY;
    let mut theta_max = f64::NEG_INFINITY;
    for k in 0..=probe_horizon {
        let theta = decoupling_variables(model, policy, k)?;
        for t in theta {
            theta_min = theta_min.min(t);
            theta_max = theta_max.max(t);
        }
    }
    let cond4_pass = theta_min > 0.0 && theta_max.is_finite();

    Ok(ConditionReport {
        cond1,
        cond1_pass,
        q_upper,
        r_lower,
        r_upper,
        cond2_pass,
        p_ceiling,
        theta_min,
        theta_max,
        cond4_pass,
        horizon: probe_horizon,
    })
}

/// One row of a coupling-strength sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scale: f64,
    pub verdict: Verdict,
    pub spectral_radius: Option<f64>,
    /// Largest covariance trace seen along the probe iteration.
    pub sup_trace: f64,
    pub iterations: usize,
}

/// Result of [`weak_coupling_sweep`].
#[derive(Debug, Clone)]
pub struct WeakCouplingSweep {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the first non-bounded verdict, if any.
    pub first_unbounded: Option<usize>,
    /// Empirical threshold: the largest scale before `first_unbounded`.
    pub threshold: Option<f64>,
    /// Detectability of `(Cᵢ, √2ϑᵢA_ii)` per subsystem at the base model's
    /// decoupling variables.
    pub precondition: Vec<DetectabilityReport>,
    pub precondition_pass: bool,
}

/// Probe DMRE boundedness while scaling all coupling blocks by each entry of
/// `scales` (diagonal blocks fixed).
///
/// Decoupling variables are re-derived from the scaled model's topology, so
/// the zero-coupling point runs with `ϑ = 1`.
pub fn weak_coupling_sweep(
    model: &LisModel,
    scales: &[f64],
    policy: DecouplingPolicy,
    opts: &SteadySolveOptions,
) -> Result<WeakCouplingSweep> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidModel("the coupling sweep needs a time-invariant model".into()));
    }
    let base_theta = decoupling_variables(model, policy, 0)?;
    let mut precondition = Vec::with_capacity(model.s());
    for i in 0..model.s() {
        let ni = model.pattern().state_dim(i);
        let a_ii = model
            .a_block(0, i, i)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(ni, ni));
        let scaled = 2.0_f64.sqrt() * base_theta[i] * a_ii;
        precondition.push(detectability_check(model.c_block(0, i), &scaled)?);
    }
    let precondition_pass = precondition.iter().all(|p| p.detectable);

    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let scaled_model = model.with_scaled_couplings(scale)?;
        let theta = decoupling_variables(&scaled_model, policy, 0)?;
        let cond1 = condition1_time_invariant(&scaled_model)?;
        let steady = steady_state_solve(&scaled_model, &theta, opts)?;
        let report = boundedness_from_steady(&scaled_model, &theta, &steady, cond1)?;
        rows.push(SweepRow {
            scale,
            verdict: report.bounded,
            spectral_radius: report.spectral_radius,
            sup_trace: steady.sup_trace,
            iterations: steady.iterations,
        });
    }
    let first_unbounded = rows.iter().position(|r| r.verdict != Verdict::Yes);
    let threshold = match first_unbounded {
        Some(0) => None,
        Some(idx) => Some(rows[idx - 1].scale),
        None => rows.last().map(|r| r.scale),
    };
    Ok(WeakCouplingSweep { rows, first_unbounded, threshold, precondition, precondition_pass })
}
